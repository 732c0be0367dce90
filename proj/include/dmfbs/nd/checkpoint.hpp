#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dmfbs/errors.hpp"
#include "dmfbs/nd/tensor.hpp"

// Checkpoint container layout (all integers little-endian):
//   "DMFB" | u32 version | u64 array count |
//   per array: u32 name length | name bytes | u32 rank | u64 dims[rank] | f32 data[prod(dims)]
// Arrays are written in ParamSet (lexicographic) order.

namespace dmfbs::nd {

inline constexpr std::array<char, 4> kCheckpointMagic{'D', 'M', 'F', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<unsigned char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <class U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw IoError("checkpoint truncated");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace detail

template <class T>
void write_checkpoint(std::ostream& out, const ParamSet<T>& params) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, params.size());
  for (const auto& [name, t] : params) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) detail::put_le<std::uint64_t>(out, d);
    for (T v : t.data) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

template <class T = float>
ParamSet<T> read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) throw IoError("not a DMFB checkpoint");
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto count = detail::get_le<std::uint64_t>(in);
  ParamSet<T> params;
  for (std::uint64_t a = 0; a < count; ++a) {
    const auto len = detail::get_le<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw IoError("checkpoint truncated in array name");
    const auto rank = detail::get_le<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(detail::get_le<std::uint64_t>(in));
    Tensor<T> t(shape);
    for (auto& v : t.data) v = static_cast<T>(std::bit_cast<float>(detail::get_le<std::uint32_t>(in)));
    params.emplace(std::move(name), std::move(t));
  }
  return params;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParamSet<T>& params) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    write_checkpoint(out, params);
  }
  std::filesystem::rename(tmp, path);
}

template <class T = float>
ParamSet<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint<T>(in);
}

}  // namespace dmfbs::nd
