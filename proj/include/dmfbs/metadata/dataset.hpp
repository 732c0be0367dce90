#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dmfbs/errors.hpp"

namespace dmfbs {

enum class Split : std::uint8_t { Train, Valid, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw UsageError("unknown split '" + s + "'");
}

/// Tabular classification dataset: real predictors (row-major), integer labels in [0, C).
struct Dataset {
  std::string id;
  std::size_t rows = 0;
  std::size_t features = 0;
  int num_classes = 0;
  std::vector<float> x;
  std::vector<int> y;
  std::vector<Split> split;

  float at(std::size_t i, std::size_t f) const { return x[i * features + f]; }
  float& at(std::size_t i, std::size_t f) { return x[i * features + f]; }

  std::vector<std::size_t> rows_in(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rows; ++i)
      if (split[i] == s) out.push_back(i);
    return out;
  }

  /// Checks the structural invariants. Batches may legitimately miss classes,
  /// so class coverage is optional.
  void validate(bool require_all_classes = true) const {
    if (rows < 1 || features < 1) throw UsageError("dataset '" + id + "' must have at least one row and one feature");
    if (num_classes < 2) throw UsageError("dataset '" + id + "' must have at least two classes");
    if (x.size() != rows * features || y.size() != rows || split.size() != rows) {
      throw UsageError("dataset '" + id + "' has inconsistent array lengths");
    }
    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (int label : y) {
      if (label < 0 || label >= num_classes) throw UsageError("dataset '" + id + "' has a label outside [0, C)");
      seen[static_cast<std::size_t>(label)] = true;
    }
    if (require_all_classes && std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw UsageError("dataset '" + id + "' does not contain every class");
    }
  }
};

/// Row/column subset. Labels and split marks follow their rows.
inline Dataset subset(const Dataset& d, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& features) {
  Dataset out;
  out.id = d.id;
  out.rows = rows.size();
  out.features = features.size();
  out.num_classes = d.num_classes;
  out.x.reserve(rows.size() * features.size());
  for (std::size_t r : rows) {
    for (std::size_t f : features) out.x.push_back(d.at(r, f));
    out.y.push_back(d.y[r]);
    out.split.push_back(d.split[r]);
  }
  return out;
}

inline std::vector<std::size_t> all_features(const Dataset& d) {
  std::vector<std::size_t> f(d.features);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = i;
  return f;
}

/// The train-split rows, or every row when the dataset has no train split.
inline Dataset train_view(const Dataset& d) {
  auto rows = d.rows_in(Split::Train);
  if (rows.empty()) {
    rows.resize(d.rows);
    for (std::size_t i = 0; i < d.rows; ++i) rows[i] = i;
  }
  return subset(d, rows, all_features(d));
}

/// Per-feature z-score using train-split statistics. Constant features map to 0.
inline void standardize(Dataset& d) {
  auto train = d.rows_in(Split::Train);
  if (train.empty()) {
    train.resize(d.rows);
    for (std::size_t i = 0; i < d.rows; ++i) train[i] = i;
  }
  for (std::size_t f = 0; f < d.features; ++f) {
    double mean = 0.0;
    for (std::size_t r : train) mean += d.at(r, f);
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (std::size_t r : train) var += (d.at(r, f) - mean) * (d.at(r, f) - mean);
    const double sd = std::sqrt(var / static_cast<double>(train.size()));
    for (std::size_t r = 0; r < d.rows; ++r) {
      d.at(r, f) = sd > 1e-12 ? static_cast<float>((d.at(r, f) - mean) / sd) : 0.0f;
    }
  }
}

// CSV: header f0,...,f{F-1},label,split

inline void write_dataset_csv(std::ostream& out, const Dataset& d) {
  for (std::size_t f = 0; f < d.features; ++f) out << 'f' << f << ',';
  out << "label,split\n";
  out.precision(9);
  for (std::size_t i = 0; i < d.rows; ++i) {
    for (std::size_t f = 0; f < d.features; ++f) out << d.at(i, f) << ',';
    out << d.y[i] << ',' << to_string(d.split[i]) << '\n';
  }
}

inline void save_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_dataset_csv(out, d);
}

/// Parses the dataset CSV. The class count is max(label) + 1.
inline Dataset read_dataset_csv(std::istream& in, const std::string& id) {
  Dataset d;
  d.id = id;
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset '" + id + "': empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "split") {
    throw IoError("dataset '" + id + "': header must be f0,...,label,split");
  }
  d.features = header.size() - 2;
  int max_label = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        if (col < d.features) d.x.push_back(std::stof(cell));
        else if (col == d.features) d.y.push_back(std::stoi(cell));
        else d.split.push_back(parse_split(cell));
      } catch (const std::logic_error&) {
        throw IoError("dataset '" + id + "': bad cell '" + cell + "'");
      }
      ++col;
    }
    if (col != d.features + 2) throw IoError("dataset '" + id + "': ragged row");
    max_label = std::max(max_label, d.y.back());
    ++d.rows;
  }
  d.num_classes = max_label + 1;
  d.validate();
  return d;
}

inline Dataset load_dataset_csv(const std::filesystem::path& path, bool standardize_features = true) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  Dataset d = read_dataset_csv(in, path.stem().string());
  if (standardize_features) standardize(d);
  return d;
}

}  // namespace dmfbs
