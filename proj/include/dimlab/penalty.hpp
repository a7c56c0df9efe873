#pragma once

// Linear-baseline-referenced monotonicity penalty.
//
// For each monotonic feature j the batch predictions are regressed on X_j
// (population covariance over variance), the batch is sorted by prediction,
// and every adjacent sorted pair whose prediction increment falls short of
// the baseline increment a_j * dx contributes the squared shortfall. The
// per-feature sums are added and divided by the batch size.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dimlab/autodiff.hpp"
#include "dimlab/error.hpp"
#include "dimlab/tensor.hpp"

namespace dimlab {

struct LinearBaseline {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Feature columns expected to be non-decreasing in the prediction.
struct MonotonicitySpec {
  std::vector<std::size_t> indices;

  bool empty() const noexcept { return indices.empty(); }

  /// Throws ParameterError on out-of-range or duplicate indices.
  void validate(std::size_t num_features) const {
    std::vector<char> seen(num_features, 0);
    for (std::size_t j : indices) {
      if (j >= num_features) {
        throw ParameterError("monotonic feature index " + std::to_string(j) + " out of range for " +
                             std::to_string(num_features) + " features");
      }
      if (seen[j]) throw ParameterError("duplicate monotonic feature index " + std::to_string(j));
      seen[j] = 1;
    }
  }
};

struct ViolationVector {
  std::size_t feature = 0;
  std::vector<double> values;
};

struct PenaltyBreakdown {
  std::map<std::size_t, double> per_feature;
  double total = 0.0;
  std::size_t batch_size = 0;
  /// Features that could not be fitted in this batch (N < 2 or constant column).
  std::vector<std::size_t> skipped_features;
};

enum class BaselineMode { frozen, coupled };

inline const char* to_string(BaselineMode m) { return m == BaselineMode::frozen ? "frozen" : "coupled"; }

inline BaselineMode parse_baseline_mode(const std::string& s) {
  if (s == "frozen") return BaselineMode::frozen;
  if (s == "coupled") return BaselineMode::coupled;
  throw ConfigError("unknown baseline mode '" + s + "' (expected frozen or coupled)");
}

/// Column j of an N x d matrix.
inline std::vector<double> column(const Tensor& X, std::size_t j) {
  if (X.rank() != 2) throw DimensionError("expected a matrix, got " + shape_str(X.shape()));
  if (j >= X.dim(1)) throw DimensionError("column " + std::to_string(j) + " out of range for " + shape_str(X.shape()));
  const std::size_t n = X.dim(0);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = X.at(i, j);
  return out;
}

inline std::optional<LinearBaseline> try_fit_linear_baseline(std::span<const double> x,
                                                             std::span<const double> preds) {
  if (x.size() != preds.size()) {
    throw DimensionError("fit_linear_baseline: feature length " + std::to_string(x.size()) +
                         " vs prediction length " + std::to_string(preds.size()));
  }
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (*lo == *hi) return std::nullopt;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) * inv_n;
  const double mp = std::accumulate(preds.begin(), preds.end(), 0.0) * inv_n;
  double cov = 0.0, var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    cov += dx * (preds[i] - mp);
    var += dx * dx;
  }
  cov *= inv_n;
  var *= inv_n;
  if (!(var > 0.0)) return std::nullopt;
  const double slope = cov / var;
  return LinearBaseline{slope, mp - slope * mx};
}

/// Least-squares line of predictions on one feature (population moments).
/// Throws DegenerateFeature for N < 2 or a constant feature.
inline LinearBaseline fit_linear_baseline(std::span<const double> x, std::span<const double> preds) {
  auto fit = try_fit_linear_baseline(x, preds);
  if (!fit) {
    throw DegenerateFeature(x.size() < 2 ? "fewer than two rows" : "feature has zero variance in batch");
  }
  return *fit;
}

/// Stable ascending argsort: ties keep their original order.
inline std::vector<std::size_t> stable_argsort(std::span<const double> values) {
  std::vector<std::size_t> perm(values.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  return perm;
}

struct SortedBatch {
  std::vector<double> preds;
  std::vector<double> x;
  std::vector<std::size_t> perm;
};

inline SortedBatch sort_by_predictions(std::span<const double> preds, std::span<const double> x) {
  if (preds.size() != x.size()) {
    throw DimensionError("sort_by_predictions: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(x.size()) + " feature values");
  }
  SortedBatch out;
  out.perm = stable_argsort(preds);
  out.preds.reserve(preds.size());
  out.x.reserve(x.size());
  for (std::size_t p : out.perm) {
    out.preds.push_back(preds[p]);
    out.x.push_back(x[p]);
  }
  return out;
}

inline std::vector<double> reference_predictions(const LinearBaseline& baseline, std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = baseline.slope * x[i] + baseline.intercept;
  return out;
}

/// v[i] = max(0, slope*(x[i+1]-x[i]) - (p[i+1]-p[i])) over adjacent sorted pairs.
/// The intercept cancels in increments.
inline ViolationVector adjacent_violations(std::span<const double> sorted_preds,
                                           std::span<const double> reordered_x, double slope,
                                           std::size_t feature = 0) {
  if (sorted_preds.size() != reordered_x.size()) {
    throw DimensionError("adjacent_violations: length mismatch");
  }
  ViolationVector v{feature, {}};
  const std::size_t n = sorted_preds.size();
  if (n < 2) return v;
  v.values.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double df = sorted_preds[i + 1] - sorted_preds[i];
    const double dg = slope * (reordered_x[i + 1] - reordered_x[i]);
    v.values[i] = std::max(0.0, dg - df);
  }
  return v;
}

inline double feature_penalty(const ViolationVector& v) {
  double s = 0.0;
  for (double e : v.values) s += e * e;
  return s;
}

inline PenaltyBreakdown monotonicity_penalty(std::span<const double> preds, const Tensor& X,
                                             const MonotonicitySpec& spec) {
  if (X.rank() != 2 || X.dim(0) != preds.size()) {
    throw DimensionError("monotonicity_penalty: " + std::to_string(preds.size()) + " predictions vs features " +
                         shape_str(X.shape()));
  }
  spec.validate(X.dim(1));
  PenaltyBreakdown out;
  out.batch_size = preds.size();
  if (spec.empty() || preds.empty()) return out;
  const auto perm = stable_argsort(preds);
  std::vector<double> sorted(preds.size());
  for (std::size_t i = 0; i < perm.size(); ++i) sorted[i] = preds[perm[i]];
  double sum = 0.0;
  for (std::size_t j : spec.indices) {
    const auto xj = column(X, j);
    const auto fit = try_fit_linear_baseline(xj, preds);
    if (!fit) {
      out.per_feature[j] = 0.0;
      out.skipped_features.push_back(j);
      continue;
    }
    std::vector<double> rx(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) rx[i] = xj[perm[i]];
    const double pj = feature_penalty(adjacent_violations(sorted, rx, fit->slope, j));
    out.per_feature[j] = pj;
    sum += pj;
  }
  out.total = sum / static_cast<double>(preds.size());
  return out;
}

inline constexpr double kComplianceTolerance = 1e-12;

/// Fraction of adjacent sorted pairs, over all fittable monotonic features,
/// with no violation. nullopt when there is no pair to score.
inline std::optional<double> compliance_score(std::span<const double> preds, const Tensor& X,
                                              const MonotonicitySpec& spec) {
  if (X.rank() != 2 || X.dim(0) != preds.size()) {
    throw DimensionError("compliance_score: " + std::to_string(preds.size()) + " predictions vs features " +
                         shape_str(X.shape()));
  }
  spec.validate(X.dim(1));
  if (preds.size() < 2) return std::nullopt;
  const auto perm = stable_argsort(preds);
  std::vector<double> sorted(preds.size());
  for (std::size_t i = 0; i < perm.size(); ++i) sorted[i] = preds[perm[i]];
  std::size_t ok = 0, total = 0;
  for (std::size_t j : spec.indices) {
    const auto xj = column(X, j);
    const auto fit = try_fit_linear_baseline(xj, preds);
    if (!fit) continue;
    std::vector<double> rx(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) rx[i] = xj[perm[i]];
    for (double v : adjacent_violations(sorted, rx, fit->slope, j).values) {
      ok += v <= kComplianceTolerance ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(ok) / static_cast<double>(total);
}

/// The penalty term L_m built inside the autodiff graph. Returns an empty Var
/// when no feature contributes (empty spec, N < 2, or all features degenerate).
///
/// The sort permutation is a constant of the graph. In frozen mode the slope
/// is a constant too; in coupled mode it stays a function of the predictions,
/// a_j = sum_i w_i p_i with w_i = (x_i - mean x) / (N var x).
inline ad::Var penalty_term(const ad::Var& preds, const Tensor& X, const MonotonicitySpec& spec,
                            BaselineMode mode) {
  const std::size_t n = preds.value().size();
  if (X.rank() != 2 || X.dim(0) != n) {
    throw DimensionError("penalty_term: " + std::to_string(n) + " predictions vs features " + shape_str(X.shape()));
  }
  spec.validate(X.dim(1));
  if (spec.empty() || n < 2) return {};
  ad::Var flat = preds.value().rank() == 1 ? preds : ad::reshape(preds, {n});
  const auto pv = flat.value().data();
  auto perm = stable_argsort(pv);
  ad::Var sorted_inc = ad::adjacent_diff(ad::gather_rows(flat, perm));
  ad::Var acc;
  for (std::size_t j : spec.indices) {
    const auto xj = column(X, j);
    const auto fit = try_fit_linear_baseline(xj, pv);
    if (!fit) continue;
    Tensor dx({n - 1}, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) dx[i] = xj[perm[i + 1]] - xj[perm[i]];
    ad::Var ref_inc;
    if (mode == BaselineMode::frozen) {
      for (double& v : dx.data()) v *= fit->slope;
      ref_inc = ad::constant(std::move(dx));
    } else {
      const double inv_n = 1.0 / static_cast<double>(n);
      const double mx = std::accumulate(xj.begin(), xj.end(), 0.0) * inv_n;
      double var = 0.0;
      for (double v : xj) var += (v - mx) * (v - mx);
      var *= inv_n;
      Tensor w({n}, 0.0);
      for (std::size_t i = 0; i < n; ++i) w[i] = (xj[i] - mx) * inv_n / var;
      ad::Var slope = ad::dot(ad::constant(std::move(w)), flat);
      ref_inc = ad::scale_by(ad::constant(std::move(dx)), slope);
    }
    ad::Var pj = ad::sum(ad::square(ad::relu(ad::sub(ref_inc, sorted_inc))));
    acc = acc ? ad::add(acc, pj) : pj;
  }
  if (!acc) return {};
  return ad::scale(acc, 1.0 / static_cast<double>(n));
}

/// MSE(preds, y) + lambda * L_m(preds, X). With lambda == 0 the penalty is not
/// added to the graph at all.
inline ad::Var combined_loss(const ad::Var& preds, const Tensor& y, const Tensor& X,
                             const MonotonicitySpec& spec, double lambda,
                             BaselineMode mode = BaselineMode::frozen) {
  if (!(lambda >= 0.0)) throw ParameterError("lambda must be non-negative, got " + std::to_string(lambda));
  const std::size_t n = preds.value().size();
  if (y.size() != n) {
    throw DimensionError("combined_loss: " + std::to_string(n) + " predictions vs " + std::to_string(y.size()) +
                         " targets");
  }
  ad::Var flat = preds.value().rank() == 1 ? preds : ad::reshape(preds, {n});
  ad::Var loss = ad::mse(flat, y);
  if (lambda == 0.0) return loss;
  ad::Var pen = penalty_term(flat, X, spec, mode);
  if (!pen) return loss;
  return ad::add(loss, ad::scale(pen, lambda));
}

}  // namespace dimlab
