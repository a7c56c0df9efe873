#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dimlab/data.hpp"
#include "dimlab/trainer.hpp"

using namespace dimlab;

namespace {

Dataset line_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset ds;
  ds.feature_names = {"x"};
  ds.X = Tensor({n, 1}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ds.X.at(i, 0) = u(rng);
    ds.y.push_back(2.0 * ds.X.at(i, 0) + 1.0);
  }
  ds.monotonic.indices = {0};
  return ds;
}

PreparedSplit small_split(std::uint64_t seed) {
  SyntheticConfig sc;
  sc.n = 300;
  sc.seed = 1;
  auto ds = generate_synthetic(sc);
  ds.monotonic = ds.resolve({"x3"});
  auto s = train_test_split(ds, 0.8, seed);
  return {minmax_normalize(s.train).dataset, minmax_normalize(s.test).dataset, false};
}

ModelConfig small_mlp() {
  auto c = default_model_config(Architecture::mlp3, 4);
  c.hidden_sizes = {16, 8, 4};
  return c;
}

TrainConfig quick(std::size_t epochs = 5) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.batch_size = 32;
  return t;
}

RunReport fake(double lambda, double val_mse, std::optional<double> compliance) {
  RunReport r;
  r.train.lambda = lambda;
  r.validation.mse = val_mse;
  r.validation.compliance = compliance;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, ZeroGradientLeavesParametersAndAdvancesStep) {
  std::vector<Parameter> p = {{"w", Tensor::vector({0.5, -2.0})}};
  AdamState st;
  adam_step(p, {Tensor({2}, 0.0)}, st, 1e-3);
  adam_step(p, {Tensor({2}, 0.0)}, st, 1e-3);
  EXPECT_EQ(p[0].value.values(), (std::vector<double>{0.5, -2.0}));
  EXPECT_EQ(st.step, 2u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Parameter> p = {{"w", Tensor::scalar(3.0)}};
  AdamState st;
  adam_step(p, {Tensor::scalar(1.0)}, st, 1e-3);
  EXPECT_NEAR(3.0 - p[0].value.item(), 1e-3, 1e-10);
  // Bias correction makes the first move independent of gradient scale.
  std::vector<Parameter> q = {{"w", Tensor::scalar(3.0)}};
  AdamState st2;
  adam_step(q, {Tensor::scalar(250.0)}, st2, 1e-3);
  EXPECT_NEAR(3.0 - q[0].value.item(), 1e-3, 1e-10);
}

TEST(Adam, ConvergesOnSquare) {
  std::vector<Parameter> p = {{"w", Tensor::scalar(1.0)}};
  AdamState st;
  int steps = 0;
  for (; steps < 2000 && std::abs(p[0].value.item()) >= 1e-2; ++steps) {
    adam_step(p, {Tensor::scalar(2.0 * p[0].value.item())}, st, 1e-2);
  }
  EXPECT_LT(std::abs(p[0].value.item()), 1e-2) << "after " << steps << " steps";
}

TEST(Adam, NonFiniteGradientThrowsAndLeavesParameters) {
  std::vector<Parameter> p = {{"w", Tensor::vector({1.0, 2.0})}};
  AdamState st;
  EXPECT_THROW(adam_step(p, {Tensor::vector({0.0, std::numeric_limits<double>::quiet_NaN()})}, st, 1e-3),
               NumericError);
  EXPECT_EQ(p[0].value.values(), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(st.step, 0u);
  EXPECT_THROW(adam_step(p, {Tensor::vector({0.0})}, st, 1e-3), DimensionError);
}

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, PerfectPredictor) {
  const std::vector<double> y = {1, -2, 3};
  const auto m = compute_metrics(y, y);
  EXPECT_EQ(m.mse, 0.0);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.mape, 0.0);
}

TEST(Metrics, UnitErrors) {
  const auto m = compute_metrics(std::vector<double>{0, 2}, std::vector<double>{1, 1});
  EXPECT_DOUBLE_EQ(m.mse, 1.0);
  EXPECT_DOUBLE_EQ(m.mae, 1.0);
  EXPECT_DOUBLE_EQ(m.mape, 100.0);
}

TEST(Metrics, ZeroTargetIsGuarded) {
  const auto m = compute_metrics(std::vector<double>{1e-9, 1}, std::vector<double>{0, 1});
  EXPECT_TRUE(std::isfinite(m.mape));
  EXPECT_DOUBLE_EQ(m.mape, 100.0 * (1e-9 / kMapeEpsilon) / 2.0);
}

TEST(Metrics, EmptyOrMismatchedThrows) {
  EXPECT_THROW(compute_metrics(std::vector<double>{}, std::vector<double>{}), DataError);
  EXPECT_THROW(compute_metrics(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);
}

TEST(Metrics, EvaluateAddsCompliance) {
  const auto ds = line_data(50, 2);
  const auto m = build_model(default_model_config(Architecture::ann, 1, 0));
  const auto met = evaluate(m, ds);
  ASSERT_TRUE(met.compliance.has_value());
  EXPECT_GE(*met.compliance, 0.0);
  EXPECT_LE(*met.compliance, 1.0);
  auto free = ds;
  free.monotonic = {};
  EXPECT_FALSE(evaluate(m, free).compliance.has_value());
}

// ---------------------------------------------------------------------------
// train

TEST(Train, AnnLearnsALine) {
  const auto ds = line_data(512, 3);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 32;
  cfg.max_epochs = 100;
  cfg.early_stop_patience = 100;
  const auto res = train(build_model(default_model_config(Architecture::ann, 1, 1)), ds, cfg);
  EXPECT_LT(evaluate(res.model, ds).mse, 1e-2);
}

TEST(Train, ZeroEpochsReturnsInitialModel) {
  const auto split = small_split(0);
  const auto m0 = build_model(small_mlp());
  const auto res = train(m0, split.train, quick(0));
  EXPECT_TRUE(res.report.history.empty());
  EXPECT_EQ(res.report.best_epoch, 0u);
  for (std::size_t i = 0; i < m0.parameters.size(); ++i) EXPECT_EQ(res.model.parameters[i].value, m0.parameters[i].value);
}

TEST(Train, SameSeedBitIdenticalReport) {
  const auto split = small_split(0);
  auto cfg = quick(4);
  cfg.lambda = 0.6;
  cfg.seed = 11;
  auto mc = small_mlp();
  mc.seed = 11;
  const auto a = train(build_model(mc), split.train, cfg).report;
  const auto b = train(build_model(mc), split.train, cfg).report;
  EXPECT_EQ(run_report_to_json(a).dump(), run_report_to_json(b).dump());
  cfg.seed = 12;
  EXPECT_NE(run_report_to_json(train(build_model(mc), split.train, cfg).report).dump(),
            run_report_to_json(a).dump());
}

TEST(Train, LambdaZeroMatchesPenaltyFreeRun) {
  auto split = small_split(2);
  auto free = split.train;
  free.monotonic = {};
  for (auto mode : {BaselineMode::frozen, BaselineMode::coupled}) {
    auto cfg = quick(4);
    cfg.baseline_mode = mode;
    const auto a = train(build_model(small_mlp()), split.train, cfg);
    const auto b = train(build_model(small_mlp()), free, cfg);
    ASSERT_EQ(a.report.history.size(), b.report.history.size());
    for (std::size_t e = 0; e < a.report.history.size(); ++e) {
      EXPECT_EQ(a.report.history[e].train_loss, b.report.history[e].train_loss);
      EXPECT_EQ(a.report.history[e].val_mse, b.report.history[e].val_mse);
    }
    for (std::size_t i = 0; i < a.model.parameters.size(); ++i) {
      EXPECT_EQ(a.model.parameters[i].value, b.model.parameters[i].value);
    }
  }
}

TEST(Train, BestEpochHasLowestValidationMse) {
  const auto split = small_split(1);
  auto cfg = quick(12);
  cfg.lambda = 0.4;
  cfg.early_stop_patience = 3;
  const auto res = train(build_model(small_mlp()), split.train, cfg);
  const auto& h = res.report.history;
  ASSERT_FALSE(h.empty());
  EXPECT_LE(h.size(), cfg.max_epochs);
  EXPECT_LE(res.report.best_epoch, h.size());
  for (const auto& e : h) {
    EXPECT_LE(res.report.validation.mse, e.val_mse);
    EXPECT_GE(e.penalty, 0.0);
  }
  if (res.report.best_epoch > 0) {
    EXPECT_EQ(res.report.validation.mse, h[res.report.best_epoch - 1].val_mse);
  }
}

TEST(Train, EarlyStoppingHonorsPatience) {
  const auto split = small_split(1);
  auto cfg = quick(200);
  cfg.learning_rate = 0.05;
  cfg.early_stop_patience = 2;
  const auto res = train(build_model(small_mlp()), split.train, cfg);
  const auto& h = res.report.history;
  if (h.size() < cfg.max_epochs) EXPECT_EQ(h.size(), res.report.best_epoch + cfg.early_stop_patience);
}

TEST(Train, PenaltyIsZeroWithoutMonotonicFeatures) {
  auto split = small_split(0);
  split.train.monotonic = {};
  auto cfg = quick(2);
  cfg.lambda = 1.0;
  for (const auto& e : train(build_model(small_mlp()), split.train, cfg).report.history) EXPECT_EQ(e.penalty, 0.0);
}

TEST(Train, ValidationOverrideIsUsed) {
  const auto split = small_split(0);
  const auto res = train(build_model(small_mlp()), split.train, quick(2), &split.test);
  EXPECT_EQ(res.report.validation.mse, compute_metrics(predict(res.model, split.test.X), split.test.y).mse);
}

TEST(Train, RejectsBadInputs) {
  const auto split = small_split(0);
  auto cfg = quick(1);
  cfg.lambda = -0.1;
  EXPECT_THROW(train(build_model(small_mlp()), split.train, cfg), ConfigError);
  cfg = quick(1);
  cfg.batch_size = 1;
  EXPECT_THROW(train(build_model(small_mlp()), split.train, cfg), ConfigError);
  EXPECT_THROW(train(build_model(default_model_config(Architecture::ann, 3)), split.train, quick(1)),
               DimensionError);
}

TEST(Train, DivergenceReportsEpochAndBatch) {
  auto ds = line_data(64, 0);
  for (auto& v : ds.y) v *= 1e300;
  auto cfg = quick(3);
  try {
    train(build_model(default_model_config(Architecture::ann, 1)), ds, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

// ---------------------------------------------------------------------------
// lambda_grid_search

TEST(GridSearch, CartesianBookkeeping) {
  std::vector<std::uint64_t> calls;
  SplitFactory factory = [&](std::uint64_t s) {
    calls.push_back(s);
    return small_split(s);
  };
  const std::vector<std::uint64_t> seeds = {0, 1, 2};
  const auto reports = lambda_grid_search(small_mlp(), quick(1), factory, default_lambda_grid(), seeds, 3);
  ASSERT_EQ(reports.size(), 18u);
  EXPECT_EQ(calls.size(), 3u);
  for (std::size_t k = 0; k < reports.size(); ++k) {
    EXPECT_EQ(reports[k].train.lambda, default_lambda_grid()[k / 3]);
    EXPECT_EQ(reports[k].train.seed, seeds[k % 3]);
    EXPECT_EQ(reports[k].model.seed, seeds[k % 3]);
    EXPECT_EQ(reports[k].feature_set, "x3");
    EXPECT_FALSE(reports[k].failed) << reports[k].error;
  }
}

TEST(GridSearch, SingleCellEqualsPlainTraining) {
  const auto split = small_split(4);
  const auto reports =
      lambda_grid_search(small_mlp(), quick(3), [](std::uint64_t s) { return small_split(s); }, {0.0}, {4});
  ASSERT_EQ(reports.size(), 1u);
  auto mc = small_mlp();
  mc.seed = 4;
  auto tc = quick(3);
  tc.seed = 4;
  auto res = train(build_model(mc), split.train, tc);
  res.report.test = evaluate(res.model, split.test);
  EXPECT_EQ(run_report_to_json(reports[0]).dump(), run_report_to_json(res.report).dump());
}

TEST(GridSearch, CellsShareInitialization) {
  const auto reports = lambda_grid_search(small_mlp(), quick(0), [](std::uint64_t s) { return small_split(s); },
                                          default_lambda_grid(), {5});
  for (const auto& r : reports) {
    EXPECT_EQ(r.validation.mse, reports[0].validation.mse);
    EXPECT_EQ(r.test, reports[0].test);
  }
}

TEST(GridSearch, ThreadCountDoesNotChangeResults) {
  auto factory = [](std::uint64_t s) { return small_split(s); };
  const auto a = lambda_grid_search(small_mlp(), quick(2), factory, {0.0, 0.5}, {0, 1}, 1);
  const auto b = lambda_grid_search(small_mlp(), quick(2), factory, {0.0, 0.5}, {0, 1}, 4);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(run_report_to_json(a[k]).dump(), run_report_to_json(b[k]).dump());
}

TEST(GridSearch, FailedCellIsMarkedAndOthersContinue) {
  auto factory = [](std::uint64_t s) {
    auto sp = small_split(s);
    if (s == 1) {
      for (auto& v : sp.train.y) v = std::numeric_limits<double>::infinity();
    }
    return sp;
  };
  const auto reports = lambda_grid_search(small_mlp(), quick(1), factory, {0.0}, {0, 1});
  EXPECT_FALSE(reports[0].failed);
  EXPECT_TRUE(reports[1].failed);
  EXPECT_FALSE(reports[1].error.empty());
  EXPECT_EQ(reports[1].feature_set, "x3");
}

TEST(GridSearch, GridMustContainZero) {
  auto factory = [](std::uint64_t s) { return small_split(s); };
  EXPECT_THROW(lambda_grid_search(small_mlp(), quick(1), factory, {0.5, 1.0}, {0}), ConfigError);
  EXPECT_THROW(lambda_grid_search(small_mlp(), quick(1), factory, {0.0, -1.0}, {0}), ConfigError);
  EXPECT_THROW(lambda_grid_search(small_mlp(), quick(1), factory, {0.0}, {}), ConfigError);
}

// ---------------------------------------------------------------------------
// select_lambda

TEST(SelectLambda, DominatingLambdaWins) {
  const auto sel = select_lambda({fake(0, 2.0, 0.7), fake(0.4, 1.0, 0.95), fake(0.8, 1.5, 0.9)});
  EXPECT_EQ(sel.lambda, 0.4);
  EXPECT_FALSE(sel.warning.has_value());
}

TEST(SelectLambda, ComplianceFilterComesFirst) {
  // 0.0 has the lowest MSE but is more than 0.05 below the best compliance.
  const auto sel = select_lambda({fake(0, 1.0, 0.7), fake(0.4, 1.2, 0.95), fake(0.8, 1.3, 0.93)});
  EXPECT_EQ(sel.lambda, 0.4);
}

TEST(SelectLambda, FullToleranceIsPlainArgmin) {
  const auto sel = select_lambda({fake(0, 1.0, 0.1), fake(0.4, 1.2, 0.95), fake(0.8, 1.3, 1.0)}, 1.0);
  EXPECT_EQ(sel.lambda, 0.0);
}

TEST(SelectLambda, TiesGoToSmallerLambda) {
  const auto sel = select_lambda({fake(0.8, 1.0, 0.9), fake(0.2, 1.0, 0.9), fake(0.6, 1.0, 0.9)});
  EXPECT_EQ(sel.lambda, 0.2);
}

TEST(SelectLambda, MediansAcrossSeeds) {
  const auto sel = select_lambda({fake(0, 1.0, 0.9), fake(0, 5.0, 0.9), fake(0, 2.0, 0.9), fake(1, 1.5, 0.9),
                                  fake(1, 1.9, 0.9), fake(1, 1.6, 0.9)});
  EXPECT_EQ(sel.median_val_mse.at(0.0), 2.0);
  EXPECT_EQ(sel.median_val_mse.at(1.0), 1.6);
  EXPECT_EQ(sel.lambda, 1.0);
}

TEST(SelectLambda, FailedRunsAreIgnored) {
  auto bad = fake(0.4, 0.0, 1.0);
  bad.failed = true;
  const auto sel = select_lambda({fake(0, 1.0, 0.9), bad});
  EXPECT_EQ(sel.lambda, 0.0);
  EXPECT_EQ(sel.median_val_mse.count(0.4), 0u);
  EXPECT_THROW(select_lambda({bad}), ParameterError);
}

TEST(SelectLambda, UndefinedComplianceSkipsFilter) {
  const auto sel = select_lambda({fake(0, 1.0, std::nullopt), fake(0.4, 0.8, std::nullopt)});
  EXPECT_EQ(sel.lambda, 0.4);
  EXPECT_FALSE(sel.warning.has_value());
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}

// ---------------------------------------------------------------------------
// Serialization

TEST(Serialization, RunReportRoundTrip) {
  const auto split = small_split(0);
  auto cfg = quick(3);
  cfg.lambda = 0.2;
  cfg.baseline_mode = BaselineMode::coupled;
  auto res = train(build_model(small_mlp()), split.train, cfg);
  res.report.test = evaluate(res.model, split.test);
  const auto j = run_report_to_json(res.report);
  const auto back = run_report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(run_report_to_json(back).dump(), j.dump());
  EXPECT_EQ(back.history, res.report.history);
  EXPECT_EQ(back.test, res.report.test);
  EXPECT_EQ(back.train.baseline_mode, BaselineMode::coupled);
  EXPECT_FALSE(j.contains("wall_seconds"));
}

TEST(Serialization, PartialTrainConfigKeepsBase) {
  TrainConfig base;
  base.max_epochs = 7;
  const auto c = train_config_from_json({{"lambda", 0.3}}, base);
  EXPECT_EQ(c.lambda, 0.3);
  EXPECT_EQ(c.max_epochs, 7u);
  EXPECT_THROW(train_config_from_json({{"baseline_mode", "loose"}}), ConfigError);
}

TEST(Serialization, HistoryCsv) {
  RunReport r;
  r.history = {{1, 2.5, 3.0, 0.0}, {2, 1.25, 2.0, 0.5}};
  EXPECT_EQ(history_csv(r), "epoch,train_loss,val_mse,penalty\n1,2.5,3,0\n2,1.25,2,0.5\n");
}

TEST(FeatureSetLabel, JoinsNames) {
  EXPECT_EQ(feature_set_label({}), "none");
  EXPECT_EQ(feature_set_label({"x3"}), "x3");
  EXPECT_EQ(feature_set_label({"x1", "x2"}), "x1+x2");
}
