#pragma once

#include <cstdint>
#include <string>

namespace dmfbs {

/// 64-bit FNV-1a; stable across platforms, used to derive per-job seeds.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

}  // namespace dmfbs
