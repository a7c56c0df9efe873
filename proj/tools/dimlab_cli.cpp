// dimlab command-line front end: generate, train, sweep, audit, report.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dimlab/dimlab.hpp"

namespace {

using namespace dimlab;

/// Options shared by `train` and `sweep`; only flags actually given override
/// the config file.
struct RunOptions {
  std::string config_path;
  std::string data_path;
  std::string target;
  std::vector<std::string> id_columns;
  std::vector<std::string> monotonic;
  std::string arch;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> grid;
  std::size_t epochs = 0;
  std::size_t jobs = 1;
  std::string out;
  bool validate_on_test = false;
  std::string baseline_mode;
  bool norm_fit_on_train = false;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
};

void add_run_options(CLI::App& cmd, RunOptions& o, bool sweep) {
  cmd.add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  cmd.add_option("--data", o.data_path, "CSV dataset (default: synthetic benchmark)")->check(CLI::ExistingFile);
  cmd.add_option("--target", o.target, "target column of the CSV dataset");
  cmd.add_option("--id-columns", o.id_columns, "CSV columns to ignore")->delimiter(',');
  cmd.add_option("--monotonic", o.monotonic, "monotonic feature names (comma separated)")->delimiter(',');
  cmd.add_option("--arch", o.arch, "ann, mlp3, mlp5 or cnn1d")->check(CLI::IsMember({"ann", "mlp3", "mlp5", "cnn1d"}));
  o.seed_opt = cmd.add_option("--seed", o.seed, "seed (falls back to config, then DIMLAB_SEED)");
  o.epochs_opt = cmd.add_option("--epochs", o.epochs, "maximum epochs");
  cmd.add_option("--out", o.out, "output directory");
  cmd.add_flag("--validate-on-test", o.validate_on_test, "early-stop on the test split");
  cmd.add_option("--baseline-mode", o.baseline_mode, "frozen or coupled")->check(CLI::IsMember({"frozen", "coupled"}));
  cmd.add_flag("--norm-fit-on-train", o.norm_fit_on_train, "scale the test split with training ranges");
  if (sweep) {
    cmd.add_option("--seeds", o.seeds, "seed list (comma separated)")->delimiter(',');
    cmd.add_option("--grid", o.grid, "lambda grid (comma separated)")->delimiter(',');
    o.jobs_opt = cmd.add_option("--jobs", o.jobs, "parallel grid cells");
  } else {
    o.lambda_opt = cmd.add_option("--lambda", o.lambda, "penalty weight")->check(CLI::NonNegativeNumber);
  }
}

std::optional<std::uint64_t> env_seed() {
  if (const char* s = std::getenv("DIMLAB_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("DIMLAB_SEED is not an integer: ") + s);
    }
  }
  return std::nullopt;
}

ExperimentConfig resolve_config(const RunOptions& o, bool sweep) {
  ExperimentConfig cfg;
  bool seeds_from_config = false;
  if (!o.config_path.empty()) {
    cfg = load_experiment_config(o.config_path);
    std::ifstream in(o.config_path);
    seeds_from_config = nlohmann::json::parse(in).contains("seeds");
  }
  if (!o.data_path.empty()) {
    if (o.target.empty()) throw ConfigError("--data requires --target");
    cfg.dataset = CsvSource{o.data_path, o.target, o.id_columns};
  }
  if (!o.monotonic.empty()) {
    cfg.feature_sets.clear();
    if (sweep) {
      for (const auto& m : o.monotonic) cfg.feature_sets.push_back({m});
    } else {
      cfg.feature_sets.push_back(o.monotonic);
    }
  }
  if (!o.arch.empty()) cfg.architectures = {parse_architecture(o.arch)};
  if (*o.epochs_opt) cfg.train.max_epochs = o.epochs;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.validate_on_test) cfg.validate_on_test = true;
  if (o.norm_fit_on_train) cfg.norm_fit_on_train = true;
  if (!o.baseline_mode.empty()) cfg.train.baseline_mode = parse_baseline_mode(o.baseline_mode);
  if (sweep) {
    if (!o.grid.empty()) cfg.grid = o.grid;
    if (*o.jobs_opt) cfg.jobs = o.jobs;
  }
  if (!o.seeds.empty()) {
    cfg.seeds = o.seeds;
  } else if (*o.seed_opt) {
    cfg.seeds = {o.seed};
  } else if (!seeds_from_config) {
    if (auto s = env_seed()) cfg.seeds = {*s};
  }
  return cfg;
}

int cmd_generate(const std::string& config_path, SyntheticConfig sc, CLI::Option* seed_opt, CLI::App& cmd,
                 const std::string& out) {
  if (!config_path.empty()) {
    const auto cfg = load_experiment_config(config_path);
    if (const auto* s = std::get_if<SyntheticConfig>(&cfg.dataset)) {
      const SyntheticConfig from_file = *s;
      if (!cmd.count("--n")) sc.n = from_file.n;
      if (!cmd.count("--bins")) sc.bins = from_file.bins;
      if (!cmd.count("--noise-sd")) sc.noise_sd = from_file.noise_sd;
      if (!cmd.count("--bump-sd")) sc.bump_sds = from_file.bump_sds;
      if (!*seed_opt) sc.seed = from_file.seed;
    }
  } else if (!*seed_opt) {
    if (auto s = env_seed()) sc.seed = *s;
  }
  const Dataset ds = generate_synthetic(sc);
  write_csv(ds, out);
  std::cout << "wrote " << ds.rows() << " rows to " << out << "\n";
  return 0;
}

int cmd_train(const RunOptions& o) {
  ExperimentConfig cfg = resolve_config(o, false);
  if (*o.lambda_opt) cfg.train.lambda = o.lambda;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw StageError("config", e.what());
  }
  Dataset ds;
  std::vector<std::string> set;
  try {
    ds = load_dataset(cfg);
    const auto sets = resolve_feature_sets(cfg, ds);
    for (const auto& s : sets) set.insert(set.end(), s.begin(), s.end());
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("data", e.what());
  }
  const std::uint64_t seed = cfg.seeds.front();
  const PreparedSplit split = prepare_split(ds, set, cfg.train_frac, seed, cfg.norm_fit_on_train, cfg.validate_on_test);
  ModelConfig mc = resolve_model_config(cfg, cfg.architectures.front(), ds.features());
  mc.seed = seed;
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  TrainResult result = [&] {
    try {
      return train(build_model(mc), split.train, tc, split.validate_on_test ? &split.test : nullptr);
    } catch (const std::exception& e) {
      throw StageError("train", e.what());
    }
  }();
  result.report.test = evaluate(result.model, split.test);
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  write_text(out / "report.json", run_report_text(result.report));
  write_text(out / "history.csv", history_csv(result.report));
  save_checkpoint(result.model, (out / "checkpoint.json").string());
  const auto& t = result.report.test;
  std::cout << "feature set " << result.report.feature_set << ", model " << to_string(mc.architecture) << ", lambda "
            << format_double(tc.lambda) << ", seed " << seed << "\n"
            << "best epoch " << result.report.best_epoch << " of " << result.report.history.size() << "\n"
            << "test MSE " << fixed5(t.mse) << "  MAE " << fixed5(t.mae) << "  MAPE " << fixed5(t.mape)
            << "  compliance " << (t.compliance ? fixed5(*t.compliance) : std::string("n/a")) << "\n"
            << "artifacts in " << out.string() << "\n";
  return 0;
}

int cmd_sweep(const RunOptions& o) {
  const ExperimentConfig cfg = resolve_config(o, true);
  const ExperimentResult res = run_experiment(cfg, &std::cerr);
  std::cout << summary_text(res.summary);
  if (res.failed_cells) {
    std::cerr << res.failed_cells << " grid cell(s) failed; see reports/ for details\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monotonicity-penalized neural network experiments"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write the synthetic benchmark as CSV (x1,x2,x3,x4,y)");
  SyntheticConfig sc;
  std::string gen_out = "synthetic.csv", gen_config;
  gen->add_option("--config", gen_config, "JSON experiment config")->check(CLI::ExistingFile);
  gen->add_option("--n", sc.n, "sample count");
  gen->add_option("--bins", sc.bins, "bump bins per feature");
  gen->add_option("--noise-sd", sc.noise_sd, "target noise standard deviation");
  gen->add_option("--bump-sd", sc.bump_sds, "per-feature bump standard deviations (4 values)")->delimiter(',');
  auto* gen_seed = gen->add_option("--seed", sc.seed, "generator seed");
  gen->add_option("--out", gen_out, "output CSV path");

  RunOptions train_opts, sweep_opts;
  auto* train_cmd = app.add_subcommand("train", "single training run");
  add_run_options(*train_cmd, train_opts, false);
  auto* sweep_cmd = app.add_subcommand("sweep", "lambda grid x seeds over feature sets and models");
  add_run_options(*sweep_cmd, sweep_opts, true);

  auto* audit_cmd = app.add_subcommand("audit", "penalty and compliance of external predictions");
  std::string preds_csv, feats_csv, audit_out;
  std::vector<std::string> audit_mono;
  std::size_t top_k = 10;
  audit_cmd->add_option("--predictions", preds_csv, "CSV with a 'prediction' column")->required()->check(CLI::ExistingFile);
  audit_cmd->add_option("--features", feats_csv, "feature CSV with header")->required()->check(CLI::ExistingFile);
  audit_cmd->add_option("--monotonic", audit_mono, "monotonic feature names")->required()->delimiter(',');
  audit_cmd->add_option("--top-k", top_k, "violations listed per feature");
  audit_cmd->add_option("--out", audit_out, "write JSON here instead of stdout");

  auto* report_cmd = app.add_subcommand("report", "rebuild summary.csv from saved run reports");
  std::string report_dir;
  double report_tol = 0.05;
  report_cmd->add_option("--out,dir", report_dir, "experiment output directory")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("--tolerance", report_tol, "compliance drop tolerance for lambda selection");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(gen_config, sc, gen_seed, *gen, gen_out);
    if (*train_cmd) return cmd_train(train_opts);
    if (*sweep_cmd) return cmd_sweep(sweep_opts);
    if (*audit_cmd) {
      const auto rep = audit_files(preds_csv, feats_csv, audit_mono, top_k);
      const std::string text = audit_to_json(rep).dump(2) + "\n";
      if (audit_out.empty()) {
        std::cout << text;
      } else {
        write_text(audit_out, text);
      }
      return 0;
    }
    if (*report_cmd) {
      std::cout << summary_text(rebuild_report(report_dir, report_tol));
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
