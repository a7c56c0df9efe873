#pragma once

// Experiment orchestration: configuration, sweeps over feature sets and
// architectures, on-disk artifacts, summary tables and post-hoc audits.
//
// Output directory layout written by run_experiment:
//   config.json                 resolved configuration
//   reports/<cell>.json         one RunReport per (feature set, model, lambda, seed)
//   history/<cell>.csv          epoch,train_loss,val_mse,penalty
//   summary.csv                 SummaryTable, rebuilt identically by `report`
//   selection.json              two-stage lambda choice per (feature set, model)
//   timings.csv                 wall-clock seconds per cell

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dimlab/data.hpp"
#include "dimlab/error.hpp"
#include "dimlab/models.hpp"
#include "dimlab/penalty.hpp"
#include "dimlab/trainer.hpp"

namespace dimlab {

namespace fs = std::filesystem;

/// Error tagged with the pipeline stage that raised it.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

inline double percent_drop(double baseline, double best) {
  if (!(baseline > 0.0)) throw ParameterError("percent_drop needs a positive baseline");
  return 100.0 * (baseline - best) / baseline;
}

// ---------------------------------------------------------------------------
// Configuration

struct CsvSource {
  std::string path;
  std::string target;
  std::vector<std::string> id_columns;
};

struct ExperimentConfig {
  std::variant<SyntheticConfig, CsvSource> dataset = SyntheticConfig{};
  /// Each entry is one monotonic set. Empty: one single-feature set per
  /// feature the dataset marks monotonic (synthetic: x1, x2, x3).
  std::vector<std::vector<std::string>> feature_sets;
  std::vector<Architecture> architectures = {Architecture::mlp3};
  /// Optional per-architecture overrides of hidden_sizes / dropout_rate.
  std::map<Architecture, nlohmann::json> model_overrides;
  TrainConfig train;
  std::vector<double> grid = default_lambda_grid();
  std::vector<std::uint64_t> seeds = {0};
  double train_frac = 0.8;
  bool norm_fit_on_train = false;
  bool validate_on_test = false;
  double selection_tolerance = 0.05;
  std::size_t jobs = 1;
  std::string output_dir = "dimlab_out";

  void validate() const {
    if (const auto* csv = std::get_if<CsvSource>(&dataset)) {
      if (!fs::exists(csv->path)) throw ConfigError("dataset file not found: " + csv->path);
      if (csv->target.empty()) throw ConfigError("csv dataset needs a target column");
    }
    if (grid.empty()) throw ConfigError("grid must not be empty");
    for (double l : grid) {
      if (!(l >= 0.0)) throw ConfigError("grid values must be non-negative");
    }
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (architectures.empty()) throw ConfigError("at least one architecture is required");
    train.validate();
  }
};

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (const auto* s = std::get_if<SyntheticConfig>(&c.dataset)) {
    j["dataset"]["synthetic"] = {
        {"n", s->n}, {"bins", s->bins}, {"bump_sds", s->bump_sds}, {"noise_sd", s->noise_sd}, {"seed", s->seed}};
  } else {
    const auto& csv = std::get<CsvSource>(c.dataset);
    j["dataset"]["csv"] = {{"path", csv.path}, {"target", csv.target}, {"id_columns", csv.id_columns}};
  }
  j["feature_sets"] = c.feature_sets;
  j["architectures"] = nlohmann::json::array();
  for (auto a : c.architectures) j["architectures"].push_back(to_string(a));
  j["model_overrides"] = nlohmann::json::object();
  for (const auto& [a, o] : c.model_overrides) j["model_overrides"][to_string(a)] = o;
  j["train"] = train_config_to_json(c.train);
  j["grid"] = c.grid;
  j["seeds"] = c.seeds;
  j["train_frac"] = c.train_frac;
  j["norm_fit_on_train"] = c.norm_fit_on_train;
  j["validate_on_test"] = c.validate_on_test;
  j["selection_tolerance"] = c.selection_tolerance;
  j["jobs"] = c.jobs;
  j["output_dir"] = c.output_dir;
  return j;
}

/// Keys absent from `j` keep their defaults.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.contains("csv")) {
        const auto& cj = d.at("csv");
        CsvSource src;
        src.path = cj.at("path").get<std::string>();
        src.target = cj.at("target").get<std::string>();
        src.id_columns = cj.value("id_columns", std::vector<std::string>{});
        c.dataset = src;
      } else if (d.contains("synthetic")) {
        const auto& sj = d.at("synthetic");
        SyntheticConfig s;
        s.n = sj.value("n", s.n);
        s.bins = sj.value("bins", s.bins);
        s.bump_sds = sj.value("bump_sds", s.bump_sds);
        s.noise_sd = sj.value("noise_sd", s.noise_sd);
        s.seed = sj.value("seed", s.seed);
        c.dataset = s;
      } else {
        throw ConfigError("dataset must contain 'synthetic' or 'csv'");
      }
    }
    c.feature_sets = j.value("feature_sets", c.feature_sets);
    if (j.contains("architectures")) {
      c.architectures.clear();
      for (const auto& a : j.at("architectures")) c.architectures.push_back(parse_architecture(a.get<std::string>()));
    }
    if (j.contains("model_overrides")) {
      for (const auto& [k, v] : j.at("model_overrides").items()) c.model_overrides[parse_architecture(k)] = v;
    }
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    c.grid = j.value("grid", c.grid);
    c.seeds = j.value("seeds", c.seeds);
    c.train_frac = j.value("train_frac", c.train_frac);
    c.norm_fit_on_train = j.value("norm_fit_on_train", c.norm_fit_on_train);
    c.validate_on_test = j.value("validate_on_test", c.validate_on_test);
    c.selection_tolerance = j.value("selection_tolerance", c.selection_tolerance);
    c.jobs = j.value("jobs", c.jobs);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return experiment_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline ModelConfig resolve_model_config(const ExperimentConfig& c, Architecture arch, std::size_t input_dim) {
  ModelConfig m = default_model_config(arch, input_dim);
  auto it = c.model_overrides.find(arch);
  if (it != c.model_overrides.end()) {
    m.hidden_sizes = it->second.value("hidden_sizes", m.hidden_sizes);
    m.dropout_rate = it->second.value("dropout_rate", m.dropout_rate);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Data preparation

inline Dataset load_dataset(const ExperimentConfig& c) {
  if (const auto* s = std::get_if<SyntheticConfig>(&c.dataset)) return generate_synthetic(*s);
  const auto& csv = std::get<CsvSource>(c.dataset);
  std::vector<std::string> names;
  for (const auto& set : c.feature_sets) names.insert(names.end(), set.begin(), set.end());
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return load_csv(csv.path, csv.target, names, csv.id_columns).dataset;
}

inline std::vector<std::vector<std::string>> resolve_feature_sets(const ExperimentConfig& c, const Dataset& ds) {
  if (!c.feature_sets.empty()) return c.feature_sets;
  std::vector<std::vector<std::string>> out;
  for (std::size_t j : ds.monotonic.indices) out.push_back({ds.feature_names[j]});
  return out;
}

/// Split for one seed, normalized per split (or with training ranges when
/// `norm_fit_on_train`), with `monotonic` as the active feature set.
inline PreparedSplit prepare_split(const Dataset& ds, const std::vector<std::string>& monotonic, double train_frac,
                                   std::uint64_t seed, bool norm_fit_on_train, bool validate_on_test) {
  Dataset base = ds;
  base.monotonic = ds.resolve(monotonic);
  Split s = train_test_split(base, train_frac, seed);
  PreparedSplit out;
  out.validate_on_test = validate_on_test;
  Normalized tr = minmax_normalize(s.train);
  out.test = norm_fit_on_train ? apply_normalization(s.test, *tr.dataset.norm_params).dataset
                               : minmax_normalize(s.test).dataset;
  out.train = std::move(tr.dataset);
  return out;
}

// ---------------------------------------------------------------------------
// Summary tables

struct SummaryRow {
  std::string feature_set;
  Architecture model = Architecture::mlp3;
  double baseline_mse = 0.0;
  double best_mse = 0.0;
  double best_lambda = 0.0;
  double drop_mse = 0.0;
  double drop_mae = 0.0;
  double drop_mape = 0.0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;
};

struct LambdaMedians {
  double mse = 0.0, mae = 0.0, mape = 0.0;
};

/// Per-lambda medians of the test metrics across seeds for one group.
inline std::map<double, LambdaMedians> test_medians(const std::vector<const RunReport*>& group) {
  std::map<double, std::vector<const RunReport*>> by_lambda;
  for (const auto* r : group) {
    if (!r->failed) by_lambda[r->train.lambda].push_back(r);
  }
  std::map<double, LambdaMedians> out;
  for (const auto& [lambda, runs] : by_lambda) {
    std::vector<double> mse, mae, mape;
    for (const auto* r : runs) {
      mse.push_back(r->test.mse);
      mae.push_back(r->test.mae);
      mape.push_back(r->test.mape);
    }
    out[lambda] = {median(mse), median(mae), median(mape)};
  }
  return out;
}

using ReportGroups = std::map<std::pair<std::string, Architecture>, std::vector<const RunReport*>>;

inline ReportGroups group_reports(const std::vector<RunReport>& reports) {
  ReportGroups groups;
  for (const auto& r : reports) groups[{r.feature_set, r.model.architecture}].push_back(&r);
  return groups;
}

/// One row per (feature set, model): the lambda = 0 medians against the
/// lambda > 0 with the lowest median test MSE (smaller lambda on ties). With no
/// lambda > 0 available the baseline is its own best.
inline SummaryTable build_summary(const std::vector<RunReport>& reports) {
  SummaryTable table;
  for (const auto& [key, group] : group_reports(reports)) {
    const auto med = test_medians(group);
    auto base = med.find(0.0);
    if (base == med.end()) throw DataError("no completed lambda = 0 run for " + key.first + "/" + to_string(key.second));
    auto best = base;
    for (auto it = med.begin(); it != med.end(); ++it) {
      if (it->first <= 0.0) continue;
      if (best == base || it->second.mse < best->second.mse) best = it;
    }
    SummaryRow row;
    row.feature_set = key.first;
    row.model = key.second;
    row.baseline_mse = base->second.mse;
    row.best_mse = best->second.mse;
    row.best_lambda = best->first;
    row.drop_mse = percent_drop(base->second.mse, best->second.mse);
    row.drop_mae = percent_drop(base->second.mae, best->second.mae);
    row.drop_mape = percent_drop(base->second.mape, best->second.mape);
    table.rows.push_back(row);
  }
  return table;
}

inline std::string fixed5(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5f", v);
  return buf;
}

inline std::string summary_csv(const SummaryTable& t) {
  std::string out = "feature_set,model,baseline_mse,best_mse,best_lambda,pct_drop_mse,pct_drop_mae,pct_drop_mape\n";
  for (const auto& r : t.rows) {
    out += r.feature_set + ',' + to_string(r.model) + ',' + fixed5(r.baseline_mse) + ',' + fixed5(r.best_mse) + ',' +
           format_double(r.best_lambda) + ',' + fixed5(r.drop_mse) + ',' + fixed5(r.drop_mae) + ',' +
           fixed5(r.drop_mape) + '\n';
  }
  return out;
}

/// Human-readable rendering in the "Best MSE (lambda)" style.
inline std::string summary_text(const SummaryTable& t) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-6s %12s %20s %10s %10s %10s\n", "feature", "model", "baseline MSE",
                "best MSE (lambda)", "%drop MSE", "%drop MAE", "%drop MAPE");
  os << line;
  for (const auto& r : t.rows) {
    const std::string best = fixed5(r.best_mse) + " (" + format_double(r.best_lambda) + ")";
    std::snprintf(line, sizeof line, "%-16s %-6s %12s %20s %9.2f%% %9.2f%% %9.2f%%\n", r.feature_set.c_str(),
                  to_string(r.model), fixed5(r.baseline_mse).c_str(), best.c_str(), r.drop_mse, r.drop_mae,
                  r.drop_mape);
    os << line;
  }
  return os.str();
}

inline std::string lambda_label(double lambda) { return format_double(lambda); }

inline std::string cell_name(const RunReport& r) {
  return r.feature_set + "__" + to_string(r.model.architecture) + "__lambda" + lambda_label(r.train.lambda) + "__seed" +
         std::to_string(r.train.seed);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string run_report_text(const RunReport& r) { return run_report_to_json(r).dump(2) + "\n"; }

/// Every reports/*.json under `dir`, in file-name order.
inline std::vector<RunReport> load_reports(const fs::path& dir) {
  const fs::path rdir = dir / "reports";
  if (!fs::is_directory(rdir)) throw DataError("no reports directory under " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(rdir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunReport> out;
  for (const auto& f : files) out.push_back(run_report_from_json(nlohmann::json::parse(read_text(f))));
  return out;
}

inline nlohmann::json selection_json(const std::vector<RunReport>& reports, double tolerance) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, group] : group_reports(reports)) {
    std::vector<RunReport> runs;
    for (const auto* r : group) runs.push_back(*r);
    nlohmann::json row = {{"feature_set", key.first}, {"model", to_string(key.second)}};
    try {
      const auto sel = select_lambda(runs, tolerance);
      row["selected_lambda"] = sel.lambda;
      nlohmann::json per = nlohmann::json::array();
      for (const auto& [lambda, mse] : sel.median_val_mse) {
        const auto& c = sel.median_compliance.at(lambda);
        per.push_back({{"lambda", lambda},
                       {"median_val_mse", mse},
                       {"median_val_compliance", c ? nlohmann::json(*c) : nlohmann::json(nullptr)}});
      }
      row["per_lambda"] = std::move(per);
      row["warning"] = sel.warning ? nlohmann::json(*sel.warning) : nlohmann::json(nullptr);
    } catch (const ParameterError& e) {
      row["selected_lambda"] = nullptr;
      row["warning"] = e.what();
    }
    out.push_back(std::move(row));
  }
  return out;
}

/// Rebuilds summary.csv and selection.json from reports on disk.
inline SummaryTable rebuild_report(const fs::path& dir, double tolerance = 0.05) {
  const auto reports = load_reports(dir);
  SummaryTable t = build_summary(reports);
  write_text(dir / "summary.csv", summary_csv(t));
  write_text(dir / "selection.json", selection_json(reports, tolerance).dump(2) + "\n");
  return t;
}

struct ExperimentResult {
  SummaryTable summary;
  std::vector<RunReport> reports;
  std::size_t failed_cells = 0;
};

/// Full pipeline: data, splits, sweeps, artifacts, summary.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  auto stage = [](const char* name, auto&& fn) -> decltype(fn()) {
    try {
      return fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  };
  stage("config", [&] { cfg.validate(); });
  const Dataset ds = stage("data", [&] { return load_dataset(cfg); });
  const auto sets = stage("data", [&] { return resolve_feature_sets(cfg, ds); });
  const fs::path out_dir(cfg.output_dir);
  stage("write", [&] {
    fs::create_directories(out_dir / "reports");
    fs::create_directories(out_dir / "history");
    write_text(out_dir / "config.json", experiment_config_to_json(cfg).dump(2) + "\n");
  });

  ExperimentResult result;
  std::string timings = "cell,wall_seconds\n";
  for (const auto& set : sets) {
    const SplitFactory splits = [&](std::uint64_t seed) {
      return prepare_split(ds, set, cfg.train_frac, seed, cfg.norm_fit_on_train, cfg.validate_on_test);
    };
    stage("data", [&] { ds.resolve(set); });
    for (Architecture arch : cfg.architectures) {
      const ModelConfig mc = resolve_model_config(cfg, arch, ds.features());
      if (log) *log << "sweep " << feature_set_label(set) << " / " << to_string(arch) << "\n";
      auto reports = stage("train", [&] { return lambda_grid_search(mc, cfg.train, splits, cfg.grid, cfg.seeds, cfg.jobs); });
      stage("write", [&] {
        for (const auto& r : reports) {
          const std::string name = cell_name(r);
          write_text(out_dir / "reports" / (name + ".json"), run_report_text(r));
          write_text(out_dir / "history" / (name + ".csv"), history_csv(r));
          timings += name + "," + format_double(r.wall_seconds) + "\n";
          if (r.failed) {
            ++result.failed_cells;
            if (log) *log << "  cell " << name << " failed: " << r.error << "\n";
          }
        }
      });
      for (auto& r : reports) result.reports.push_back(std::move(r));
    }
  }
  stage("write", [&] { write_text(out_dir / "timings.csv", timings); });
  result.summary = stage("report", [&] { return rebuild_report(out_dir, cfg.selection_tolerance); });
  return result;
}

// ---------------------------------------------------------------------------
// Post-hoc audit of external predictions

struct ViolationPair {
  std::size_t sorted_position = 0;  // pair (i, i+1) in prediction order
  std::size_t row_lo = 0;           // original row at sorted position i
  std::size_t row_hi = 0;           // original row at sorted position i+1
  double violation = 0.0;
};

struct FeatureAudit {
  std::string name;
  std::size_t index = 0;
  bool skipped = false;  // constant column or fewer than two rows
  LinearBaseline baseline;
  double penalty = 0.0;  // P_j
  std::optional<double> compliance;
  std::vector<ViolationPair> top_violations;
};

struct AuditReport {
  std::size_t rows = 0;
  double total_penalty = 0.0;  // L_m
  std::optional<double> compliance;
  std::vector<FeatureAudit> features;
};

inline AuditReport audit(std::span<const double> preds, const Tensor& X, const std::vector<std::string>& names,
                         const MonotonicitySpec& spec, std::size_t top_k = 10) {
  if (X.rank() != 2 || X.dim(0) != preds.size()) {
    throw DataError("audit: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(X.rank() == 2 ? X.dim(0) : 0) + " feature rows");
  }
  spec.validate(X.dim(1));
  AuditReport rep;
  rep.rows = preds.size();
  const auto pb = monotonicity_penalty(preds, X, spec);
  rep.total_penalty = pb.total;
  rep.compliance = spec.empty() ? std::nullopt : compliance_score(preds, X, spec);
  for (std::size_t j : spec.indices) {
    FeatureAudit fa;
    fa.index = j;
    fa.name = j < names.size() ? names[j] : std::to_string(j);
    fa.penalty = pb.per_feature.at(j);
    const auto xj = column(X, j);
    const auto fit = try_fit_linear_baseline(xj, preds);
    if (!fit) {
      fa.skipped = true;
      rep.features.push_back(std::move(fa));
      continue;
    }
    fa.baseline = *fit;
    const auto sorted = sort_by_predictions(preds, xj);
    const auto v = adjacent_violations(sorted.preds, sorted.x, fit->slope, j);
    std::vector<ViolationPair> pairs;
    std::size_t clean = 0;
    for (std::size_t i = 0; i < v.values.size(); ++i) {
      if (v.values[i] <= kComplianceTolerance) {
        ++clean;
        continue;
      }
      pairs.push_back({i, sorted.perm[i], sorted.perm[i + 1], v.values[i]});
    }
    if (!v.values.empty()) fa.compliance = static_cast<double>(clean) / static_cast<double>(v.values.size());
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const ViolationPair& a, const ViolationPair& b) { return a.violation > b.violation; });
    if (pairs.size() > top_k) pairs.resize(top_k);
    fa.top_violations = std::move(pairs);
    rep.features.push_back(std::move(fa));
  }
  return rep;
}

inline nlohmann::json audit_to_json(const AuditReport& a) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : a.features) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& p : f.top_violations) {
      top.push_back({{"sorted_position", p.sorted_position}, {"rows", {p.row_lo, p.row_hi}}, {"violation", p.violation}});
    }
    feats.push_back({{"feature", f.name},
                     {"index", f.index},
                     {"skipped", f.skipped},
                     {"slope", f.baseline.slope},
                     {"intercept", f.baseline.intercept},
                     {"penalty", f.penalty},
                     {"compliance", opt(f.compliance)},
                     {"top_violations", std::move(top)}});
  }
  return {{"rows", a.rows}, {"total_penalty", a.total_penalty}, {"compliance", opt(a.compliance)},
          {"features", std::move(feats)}};
}

/// Audits a predictions CSV (column "prediction" if present, else the first
/// column) against a features CSV with a header row.
inline AuditReport audit_files(const std::string& predictions_csv, const std::string& features_csv,
                               const std::vector<std::string>& monotonic, std::size_t top_k = 10) {
  const CsvTable pt = read_csv_table(predictions_csv);
  const CsvTable ft = read_csv_table(features_csv);
  if (pt.rows.size() != ft.rows.size()) {
    throw DataError("row count mismatch: " + std::to_string(pt.rows.size()) + " predictions vs " +
                    std::to_string(ft.rows.size()) + " feature rows");
  }
  std::size_t pcol = 0;
  for (std::size_t j = 0; j < pt.header.size(); ++j) {
    if (pt.header[j] == "prediction") pcol = j;
  }
  std::vector<double> preds;
  for (std::size_t i = 0; i < pt.rows.size(); ++i) {
    if (!pt.rows[i][pcol]) throw DataError("missing prediction at row " + std::to_string(i));
    preds.push_back(*pt.rows[i][pcol]);
  }
  MonotonicitySpec spec;
  for (const auto& m : monotonic) spec.indices.push_back(ft.column_index(m));
  spec.validate(ft.header.size());
  Tensor X({ft.rows.size(), ft.header.size()}, 0.0);
  for (std::size_t i = 0; i < ft.rows.size(); ++i) {
    for (std::size_t j = 0; j < ft.header.size(); ++j) {
      const auto& cell = ft.rows[i][j];
      if (!cell) {
        const bool used = std::find(spec.indices.begin(), spec.indices.end(), j) != spec.indices.end();
        if (used) throw DataError("missing value in column '" + ft.header[j] + "' at row " + std::to_string(i));
        continue;
      }
      X.at(i, j) = *cell;
    }
  }
  return audit(preds, X, ft.header, spec, top_k);
}

}  // namespace dimlab
