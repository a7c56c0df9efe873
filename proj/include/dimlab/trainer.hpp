#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dimlab/autodiff.hpp"
#include "dimlab/data.hpp"
#include "dimlab/error.hpp"
#include "dimlab/models.hpp"
#include "dimlab/penalty.hpp"

namespace dimlab {

struct TrainConfig {
  double lambda = 0.0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 50;
  std::size_t early_stop_patience = 10;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  BaselineMode baseline_mode = BaselineMode::frozen;

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  }
};

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  double mape = 0.0;
  std::optional<double> compliance;

  bool operator==(const Metrics&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mse = 0.0;
  double penalty = 0.0;  // mean batch penalty value

  bool operator==(const EpochRecord&) const = default;
};

inline constexpr int kRunReportSchema = 1;

struct RunReport {
  std::string feature_set;  // label, e.g. "x3" or "x1+x2"
  std::vector<std::string> monotonic;
  ModelConfig model;
  TrainConfig train;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  Metrics validation;
  Metrics test;
  bool failed = false;
  std::string error;
  double wall_seconds = 0.0;  // excluded from JSON so reports stay reproducible
};

/// "x1+x3" style label for a set of monotonic feature names; "none" if empty.
inline std::string feature_set_label(const std::vector<std::string>& names) {
  if (names.empty()) return "none";
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : "+") + n;
  return out;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update. Throws NumericError (leaving params
/// untouched) if any gradient entry is not finite.
inline void adam_step(std::vector<Parameter>& params, const std::vector<Tensor>& grads, AdamState& state,
                      double lr) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value.shape() != grads[i].shape()) {
      throw DimensionError("adam_step: gradient shape " + shape_str(grads[i].shape()) + " for parameter '" +
                           params[i].name + "' of shape " + shape_str(params[i].value.shape()));
    }
    for (double g : grads[i].data()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter '" + params[i].name + "'");
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.shape(), 0.0);
      state.v.emplace_back(p.value.shape(), 0.0);
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].value.data();
    const auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Metrics

inline constexpr double kMapeEpsilon = 1e-8;

inline Metrics compute_metrics(std::span<const double> preds, std::span<const double> y) {
  if (preds.size() != y.size()) throw DimensionError("metrics: prediction/target length mismatch");
  if (y.empty()) throw DataError("metrics on empty dataset");
  Metrics m;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = preds[i] - y[i];
    m.mse += e * e;
    m.mae += std::abs(e);
    m.mape += std::abs(e) / std::max(std::abs(y[i]), kMapeEpsilon);
  }
  const double n = static_cast<double>(y.size());
  m.mse /= n;
  m.mae /= n;
  m.mape *= 100.0 / n;
  return m;
}

inline Metrics evaluate(const Model& model, const Dataset& ds) {
  if (ds.rows() == 0) throw DataError("evaluate: empty dataset");
  const auto preds = predict(model, ds.X);
  Metrics m = compute_metrics(preds, ds.y);
  m.compliance = compliance_score(preds, ds.X, ds.monotonic);
  return m;
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  Model model;
  RunReport report;
};

namespace detail {

inline Tensor gather_matrix_rows(const Tensor& X, std::span<const std::size_t> rows) {
  const std::size_t d = X.dim(1);
  Tensor out({rows.size(), d}, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(X.data().begin() + rows[r] * d, d, out.data().begin() + r * d);
  }
  return out;
}

inline double mse_of(const Model& model, const Dataset& ds) {
  const auto preds = predict(model, ds.X);
  return compute_metrics(preds, ds.y).mse;
}

}  // namespace detail

/// Mini-batch Adam on MSE + lambda * L_m with early stopping on validation
/// MSE. The monotonic features come from `train_ds.monotonic`.
///
/// Validation rows are carved from `train_ds` unless `validation` is given.
/// With val_fraction == 0 and no override, the training rows themselves are
/// used for early stopping.
inline TrainResult train(Model model, const Dataset& train_ds, const TrainConfig& cfg,
                         const Dataset* validation = nullptr) {
  cfg.validate();
  if (train_ds.features() != model.config.input_dim) {
    throw DimensionError("train: dataset has " + std::to_string(train_ds.features()) + " features, model expects " +
                         std::to_string(model.config.input_dim));
  }
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.model = model.config;
  report.train = cfg;
  for (std::size_t j : train_ds.monotonic.indices) report.monotonic.push_back(train_ds.feature_names.at(j));
  report.feature_set = feature_set_label(report.monotonic);

  std::mt19937_64 data_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 dropout_rng(cfg.seed);

  Dataset fit_set, val_set;
  if (validation) {
    fit_set = train_ds;
    val_set = *validation;
  } else if (cfg.val_fraction > 0.0) {
    std::vector<std::size_t> idx(train_ds.rows());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), data_rng);
    auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(idx.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
    const std::span<const std::size_t> all(idx);
    val_set = subset(train_ds, all.first(n_val));
    fit_set = subset(train_ds, all.subspan(n_val));
  } else {
    fit_set = train_ds;
    val_set = train_ds;
  }
  if (fit_set.rows() == 0) throw DataError("train: no training rows");
  if (val_set.rows() == 0) throw DataError("train: empty validation set");

  const std::size_t n = fit_set.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  AdamState adam;
  std::vector<Parameter> best = model.parameters;
  double best_val = detail::mse_of(model, val_set);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), data_rng);
    double loss_sum = 0.0, pen_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batches) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Tensor xb = detail::gather_matrix_rows(fit_set.X, rows);
      Tensor yb({rows.size()}, 0.0);
      for (std::size_t r = 0; r < rows.size(); ++r) yb[r] = fit_set.y[rows[r]];

      ForwardPass fp = forward(model, xb, true, dropout_rng);
      ad::Var loss = combined_loss(fp.predictions, yb, xb, fit_set.monotonic, cfg.lambda, cfg.baseline_mode);
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      ad::backward_pass(loss);
      std::vector<Tensor> grads;
      grads.reserve(fp.leaves.size());
      for (const auto& l : fp.leaves) grads.push_back(l.grad());
      try {
        adam_step(model.parameters, grads, adam, cfg.learning_rate);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      loss_sum += loss.item() * static_cast<double>(rows.size());
      pen_sum += monotonicity_penalty(fp.predictions.value().data(), xb, fit_set.monotonic).total;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.penalty = pen_sum / static_cast<double>(batches);
    rec.val_mse = detail::mse_of(model, val_set);
    report.history.push_back(rec);
    if (rec.val_mse < best_val) {
      best_val = rec.val_mse;
      best = model.parameters;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  model.parameters = std::move(best);
  report.validation = evaluate(model, val_set);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

// ---------------------------------------------------------------------------
// Lambda sweep

inline const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  return grid;
}

/// Normalized train/test data for one seed. When `validate_on_test` is set,
/// early stopping watches the test rows instead of a carved validation subset.
struct PreparedSplit {
  Dataset train;
  Dataset test;
  bool validate_on_test = false;
};

using SplitFactory = std::function<PreparedSplit(std::uint64_t seed)>;

/// Trains and evaluates one cell: model and training seeds both equal `seed`.
inline RunReport run_cell(const ModelConfig& model_cfg, const TrainConfig& base, const PreparedSplit& split,
                          double lambda, std::uint64_t seed) {
  ModelConfig mc = model_cfg;
  mc.seed = seed;
  TrainConfig tc = base;
  tc.lambda = lambda;
  tc.seed = seed;
  RunReport rep;
  rep.model = mc;
  rep.train = tc;
  for (std::size_t j : split.train.monotonic.indices) rep.monotonic.push_back(split.train.feature_names.at(j));
  const std::string label = feature_set_label(rep.monotonic);
  try {
    auto result = train(build_model(mc), split.train, tc, split.validate_on_test ? &split.test : nullptr);
    rep = std::move(result.report);
    rep.test = evaluate(result.model, split.test);
  } catch (const std::exception& e) {
    rep.failed = true;
    rep.error = e.what();
  }
  rep.feature_set = label;
  return rep;
}

/// Runs every (lambda, seed) cell, sharing one split per seed. Cells run on up
/// to `jobs` threads; the output is ordered lambda-major, then by seed.
inline std::vector<RunReport> lambda_grid_search(const ModelConfig& model_cfg, const TrainConfig& base,
                                                 const SplitFactory& splits, const std::vector<double>& grid,
                                                 const std::vector<std::uint64_t>& seeds, std::size_t jobs = 1) {
  if (grid.empty()) throw ConfigError("lambda grid must not be empty");
  if (std::find(grid.begin(), grid.end(), 0.0) == grid.end()) throw ConfigError("lambda grid must contain 0.0");
  for (double l : grid) {
    if (!(l >= 0.0)) throw ConfigError("lambda grid values must be non-negative");
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  std::map<std::uint64_t, PreparedSplit> prepared;
  for (auto s : seeds) {
    if (!prepared.count(s)) prepared.emplace(s, splits(s));
  }
  std::vector<RunReport> out(grid.size() * seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < out.size(); k = next++) {
      const double lambda = grid[k / seeds.size()];
      const auto seed = seeds[k % seeds.size()];
      out[k] = run_cell(model_cfg, base, prepared.at(seed), lambda, seed);
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, out.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct LambdaSelection {
  double lambda = 0.0;
  /// Per-lambda medians across seeds of validation MSE and compliance.
  std::map<double, double> median_val_mse;
  std::map<double, std::optional<double>> median_compliance;
  std::optional<std::string> warning;
};

/// Two-stage choice: among lambdas whose median compliance is within
/// `tolerance` of the best, take the lowest median validation MSE. Ties go
/// to the smaller lambda.
inline LambdaSelection select_lambda(const std::vector<RunReport>& reports, double tolerance = 0.05) {
  std::map<double, std::vector<double>> mses, comps;
  for (const auto& r : reports) {
    if (r.failed) continue;
    mses[r.train.lambda].push_back(r.validation.mse);
    if (r.validation.compliance) comps[r.train.lambda].push_back(*r.validation.compliance);
  }
  if (mses.empty()) throw ParameterError("select_lambda: no completed runs");
  LambdaSelection sel;
  std::optional<double> best_comp;
  for (const auto& [lambda, values] : mses) {
    sel.median_val_mse[lambda] = median(values);
    auto it = comps.find(lambda);
    if (it != comps.end()) {
      const double c = median(it->second);
      sel.median_compliance[lambda] = c;
      best_comp = best_comp ? std::max(*best_comp, c) : c;
    } else {
      sel.median_compliance[lambda] = std::nullopt;
    }
  }
  auto argmin = [&sel](auto&& admit) -> std::optional<double> {
    std::optional<double> pick;
    for (const auto& [lambda, mse] : sel.median_val_mse) {  // ascending lambda, so ties keep the smaller
      if (!admit(lambda)) continue;
      if (!pick || mse < sel.median_val_mse.at(*pick)) pick = lambda;
    }
    return pick;
  };
  std::optional<double> pick = argmin([&](double lambda) {
    if (!best_comp) return true;
    const auto& c = sel.median_compliance.at(lambda);
    return c.has_value() && *c >= *best_comp - tolerance;
  });
  if (!pick) {
    sel.warning = "no lambda passed the compliance filter; using unfiltered validation-MSE argmin";
    pick = argmin([](double) { return true; });
  }
  sel.lambda = *pick;
  return sel;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j = {{"mse", m.mse}, {"mae", m.mae}, {"mape", m.mape}};
  j["compliance"] = m.compliance ? nlohmann::json(*m.compliance) : nlohmann::json(nullptr);
  return j;
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.mse = j.at("mse").get<double>();
  m.mae = j.at("mae").get<double>();
  m.mape = j.at("mape").get<double>();
  if (!j.at("compliance").is_null()) m.compliance = j.at("compliance").get<double>();
  return m;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"val_fraction", c.val_fraction},
          {"seed", c.seed},
          {"baseline_mode", to_string(c.baseline_mode)}};
}

/// Reads keys present in `j` over the defaults in `base`.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (j.contains("lambda")) base.lambda = j.at("lambda").get<double>();
  if (j.contains("learning_rate")) base.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("max_epochs")) base.max_epochs = j.at("max_epochs").get<std::size_t>();
  if (j.contains("early_stop_patience")) base.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
  if (j.contains("val_fraction")) base.val_fraction = j.at("val_fraction").get<double>();
  if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("baseline_mode")) base.baseline_mode = parse_baseline_mode(j.at("baseline_mode").get<std::string>());
  return base;
}

inline nlohmann::json run_report_to_json(const RunReport& r) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : r.history) {
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_mse", e.val_mse}, {"penalty", e.penalty}});
  }
  return {{"schema_version", kRunReportSchema},
          {"feature_set", r.feature_set},
          {"monotonic", r.monotonic},
          {"model", model_config_to_json(r.model)},
          {"train", train_config_to_json(r.train)},
          {"history", std::move(hist)},
          {"best_epoch", r.best_epoch},
          {"validation", metrics_to_json(r.validation)},
          {"test", metrics_to_json(r.test)},
          {"failed", r.failed},
          {"error", r.error}};
}

inline RunReport run_report_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kRunReportSchema) throw DataError("unsupported run report schema");
  RunReport r;
  r.feature_set = j.at("feature_set").get<std::string>();
  r.monotonic = j.at("monotonic").get<std::vector<std::string>>();
  r.model = model_config_from_json(j.at("model"));
  r.train = train_config_from_json(j.at("train"));
  for (const auto& e : j.at("history")) {
    r.history.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                         e.at("val_mse").get<double>(), e.at("penalty").get<double>()});
  }
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  r.validation = metrics_from_json(j.at("validation"));
  r.test = metrics_from_json(j.at("test"));
  r.failed = j.at("failed").get<bool>();
  r.error = j.at("error").get<std::string>();
  return r;
}

/// Epoch history as CSV: epoch,train_loss,val_mse,penalty.
inline std::string history_csv(const RunReport& r) {
  std::string out = "epoch,train_loss,val_mse,penalty\n";
  for (const auto& e : r.history) {
    out += std::to_string(e.epoch) + ',' + format_double(e.train_loss) + ',' + format_double(e.val_mse) + ',' +
           format_double(e.penalty) + '\n';
  }
  return out;
}

}  // namespace dimlab
