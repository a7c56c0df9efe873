#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dimlab/error.hpp"
#include "dimlab/penalty.hpp"
#include "dimlab/tensor.hpp"

namespace dimlab {

struct ColumnRange {
  double min = 0.0;
  double max = 0.0;
  bool operator==(const ColumnRange&) const = default;
};

struct Dataset {
  Tensor X;  // N x d
  std::vector<double> y;
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  MonotonicitySpec monotonic;
  std::optional<std::vector<ColumnRange>> norm_params;

  std::size_t rows() const { return y.size(); }
  std::size_t features() const { return feature_names.size(); }
  Tensor targets() const { return Tensor::vector(y); }

  /// Column index for a feature name; throws SchemaError if absent.
  std::size_t feature_index(const std::string& name) const {
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
      if (feature_names[j] == name) return j;
    }
    throw SchemaError("no feature column named '" + name + "'");
  }

  MonotonicitySpec resolve(const std::vector<std::string>& names) const {
    MonotonicitySpec spec;
    for (const auto& n : names) spec.indices.push_back(feature_index(n));
    spec.validate(features());
    return spec;
  }
};

/// Rows of `ds` at `indices`, in that order. Normalization parameters are dropped.
inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t d = ds.features();
  Dataset out;
  out.feature_names = ds.feature_names;
  out.target_name = ds.target_name;
  out.monotonic = ds.monotonic;
  out.X = Tensor({indices.size(), d}, 0.0);
  out.y.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    if (src >= ds.rows()) throw DimensionError("subset row index out of range");
    for (std::size_t j = 0; j < d; ++j) out.X.at(r, j) = ds.X.at(src, j);
    out.y.push_back(ds.y[src]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

inline constexpr std::size_t kSyntheticFeatures = 4;

struct SyntheticConfig {
  std::size_t n = 5000;
  std::size_t bins = 10;
  /// Per-feature bump standard deviations; empty means 5% of each
  /// transform's range over the sampling interval.
  std::vector<double> bump_sds;
  double noise_sd = 10.0;
  std::uint64_t seed = 0;
};

namespace synthetic {

inline constexpr std::array<double, kSyntheticFeatures> kUpper = {200.0, 50.0, 150.0, 100.0};

inline double transform(std::size_t j, double x) {
  switch (j) {
    case 0: return 0.5 * x;
    case 1: return 1.2 * std::sqrt(x);
    case 2: return 2.0 * std::log1p(x);
    default: return -0.8 * x;
  }
}

inline std::array<double, kSyntheticFeatures> default_bump_sds() {
  std::array<double, kSyntheticFeatures> out{};
  for (std::size_t j = 0; j < kSyntheticFeatures; ++j) {
    out[j] = 0.05 * std::abs(transform(j, kUpper[j]) - transform(j, 0.0));
  }
  return out;
}

/// Sum of the four transforms at one point, without bumps or noise.
inline double response(const std::array<double, kSyntheticFeatures>& x) {
  double y = 0.0;
  for (std::size_t j = 0; j < kSyntheticFeatures; ++j) y += transform(j, x[j]);
  return y;
}

/// Equal-width bin of `x` in [lo, hi]; the right edge falls in the last bin.
inline std::size_t bin_index(double x, double lo, double hi, std::size_t bins) {
  if (!(hi > lo)) return 0;
  const auto b = static_cast<std::size_t>(std::floor(static_cast<double>(bins) * (x - lo) / (hi - lo)));
  return std::min(b, bins - 1);
}

}  // namespace synthetic

inline Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n < 2) throw ConfigError("synthetic sample count must be at least 2");
  if (cfg.bins < 1) throw ConfigError("bin count must be at least 1");
  if (!(cfg.noise_sd >= 0.0)) throw ConfigError("noise_sd must be non-negative");
  std::array<double, kSyntheticFeatures> sds = synthetic::default_bump_sds();
  if (!cfg.bump_sds.empty()) {
    if (cfg.bump_sds.size() != kSyntheticFeatures) throw ConfigError("bump_sds needs one entry per feature (4)");
    std::copy(cfg.bump_sds.begin(), cfg.bump_sds.end(), sds.begin());
  }
  for (double s : sds) {
    if (!(s >= 0.0)) throw ConfigError("bump standard deviations must be non-negative");
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset ds;
  ds.feature_names = {"x1", "x2", "x3", "x4"};
  ds.target_name = "y";
  ds.monotonic.indices = {0, 1, 2};
  ds.X = Tensor({cfg.n, kSyntheticFeatures}, 0.0);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    for (std::size_t j = 0; j < kSyntheticFeatures; ++j) ds.X.at(i, j) = synthetic::kUpper[j] * unit(rng);
  }

  std::array<std::vector<double>, kSyntheticFeatures> bumps;
  for (std::size_t j = 0; j < kSyntheticFeatures; ++j) {
    bumps[j].resize(cfg.bins);
    for (double& b : bumps[j]) b = sds[j] * gauss(rng);
  }
  std::array<double, kSyntheticFeatures> lo{}, hi{};
  for (std::size_t j = 0; j < kSyntheticFeatures; ++j) {
    const auto col = column(ds.X, j);
    const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
    lo[j] = *mn;
    hi[j] = *mx;
  }

  ds.y.resize(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    double y = 0.0;
    for (std::size_t j = 0; j < kSyntheticFeatures; ++j) {
      const double x = ds.X.at(i, j);
      y += synthetic::transform(j, x) + bumps[j][synthetic::bin_index(x, lo[j], hi[j], cfg.bins)];
    }
    ds.y[i] = y + cfg.noise_sd * gauss(rng);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_cell(std::string_view cell) {
  if (cell.empty() || cell == "NA") return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

/// Header row plus numeric rows, as raw cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;

  std::size_t column_index(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return j;
    }
    throw SchemaError("missing column '" + name + "'");
  }
};

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  for (auto h : detail::split_commas(line)) t.header.emplace_back(h);
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    std::vector<std::optional<double>> row(t.header.size());
    for (std::size_t j = 0; j < t.header.size() && j < cells.size(); ++j) row[j] = detail::parse_cell(cells[j]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

struct CsvLoad {
  Dataset dataset;
  std::size_t dropped_rows = 0;
};

/// Loads every non-ID column as a feature except the target. Rows with any
/// missing or unparseable cell in a used column are dropped and counted.
inline CsvLoad load_csv(const std::string& path, const std::string& target_column,
                        const std::vector<std::string>& monotonic_columns,
                        const std::vector<std::string>& id_columns = {}) {
  const CsvTable t = read_csv_table(path);
  const std::size_t target = t.column_index(target_column);
  for (const auto& m : monotonic_columns) t.column_index(m);
  for (const auto& id : id_columns) t.column_index(id);
  std::vector<std::size_t> feature_cols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j == target) continue;
    if (std::find(id_columns.begin(), id_columns.end(), t.header[j]) != id_columns.end()) continue;
    feature_cols.push_back(j);
  }
  CsvLoad out;
  Dataset& ds = out.dataset;
  ds.target_name = target_column;
  for (std::size_t j : feature_cols) ds.feature_names.push_back(t.header[j]);
  std::vector<double> xs;
  for (const auto& row : t.rows) {
    bool ok = row[target].has_value();
    for (std::size_t j : feature_cols) ok = ok && row[j].has_value();
    if (!ok) {
      ++out.dropped_rows;
      continue;
    }
    for (std::size_t j : feature_cols) xs.push_back(*row[j]);
    ds.y.push_back(*row[target]);
  }
  if (ds.y.empty()) throw DataError(path + ": no usable rows");
  ds.X = Tensor({ds.y.size(), feature_cols.size()}, std::move(xs));
  ds.monotonic = ds.resolve(monotonic_columns);
  return out;
}

/// Writes feature columns followed by the target column.
inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& name : ds.feature_names) out << name << ',';
  out << ds.target_name << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.features(); ++j) out << format_double(ds.X.at(i, j)) << ',';
    out << format_double(ds.y[i]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splitting and scaling

struct Split {
  Dataset train;
  Dataset test;
};

/// Seeded uniform row partition; the first round(train_frac * N) shuffled rows train.
inline Split train_test_split(const Dataset& ds, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  const std::size_t n = ds.rows();
  if (n < 2) throw ConfigError("need at least two rows to split");
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) throw ConfigError("split leaves one side empty");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::span<const std::size_t> all(idx);
  return {subset(ds, all.first(n_train)), subset(ds, all.subspan(n_train))};
}

inline std::vector<ColumnRange> column_ranges(const Dataset& ds) {
  std::vector<ColumnRange> out(ds.features());
  for (std::size_t j = 0; j < ds.features(); ++j) {
    const auto col = column(ds.X, j);
    if (col.empty()) continue;
    const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
    out[j] = {*mn, *mx};
  }
  return out;
}

struct Normalized {
  Dataset dataset;
  std::vector<std::string> warnings;
};

/// (x - min) / (max - min) per feature with the given ranges; columns whose
/// range is empty map to 0. The target is left as is.
inline Normalized apply_normalization(const Dataset& ds, const std::vector<ColumnRange>& ranges) {
  if (ranges.size() != ds.features()) throw DimensionError("normalization parameters do not match feature count");
  Normalized out{ds, {}};
  Dataset& r = out.dataset;
  for (std::size_t j = 0; j < ds.features(); ++j) {
    const double lo = ranges[j].min, span = ranges[j].max - ranges[j].min;
    if (!(span > 0.0)) out.warnings.push_back("constant column '" + ds.feature_names[j] + "' mapped to 0");
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      double& v = r.X.at(i, j);
      v = span > 0.0 ? (v - lo) / span : 0.0;
    }
  }
  r.norm_params = ranges;
  return out;
}

/// Min-max scaling using the split's own column ranges.
inline Normalized minmax_normalize(const Dataset& split) { return apply_normalization(split, column_ranges(split)); }

}  // namespace dimlab
