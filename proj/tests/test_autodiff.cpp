#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dimlab/autodiff.hpp"
#include "oracles.hpp"

using namespace dimlab;
using namespace dimlab::ad;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

TEST(Matmul, IdentityTimesColumn) {
  Var out = matmul(constant(Tensor::matrix({{1, 0}, {0, 1}})), constant(Tensor::matrix({{3}, {4}})));
  EXPECT_EQ(out.value(), Tensor::matrix({{3}, {4}}));
}

TEST(Matmul, RowTimesColumnIsDotProduct) {
  Var out = matmul(constant(Tensor::matrix({{1, 2}})), constant(Tensor::matrix({{3}, {4}})));
  EXPECT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(out.value()[0], 11.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(7);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  oracle::Matrix ma(3, std::vector<double>(4)), mb(4, std::vector<double>(2));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) ma[i][k] = a.at(i, k);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 2; ++j) mb[k][j] = b.at(k, j);
  const auto expect = oracle::matmul(ma, mb);
  const Var out = matmul(constant(a), constant(b));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(out.value().at(i, j), expect[i][j], 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(constant(Tensor({2, 3})), constant(Tensor({2, 2})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[2x2]"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// relu

TEST(Relu, SignCases) {
  EXPECT_EQ(relu(constant(Tensor::vector({-1, 0, 2}))).value(), Tensor::vector({0, 0, 2}));
  EXPECT_EQ(relu(constant(Tensor::vector({0.5, 3}))).value(), Tensor::vector({0.5, 3}));
}

TEST(Relu, GradientIsPositivityIndicator) {
  Var x = leaf(Tensor::vector({-1, 2}));
  backward_pass(sum(relu(x)));
  EXPECT_EQ(x.grad(), Tensor::vector({0, 1}));
}

TEST(Relu, SubgradientAtZeroIsZero) {
  Var x = leaf(Tensor::vector({0.0}));
  backward_pass(sum(relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
}

// ---------------------------------------------------------------------------
// conv1d_same

TEST(Conv1d, DeltaKernelIsIdentity) {
  const Tensor in({1, 5, 1}, std::vector<double>{1, -2, 3, 0.5, 4});
  const Tensor w({1, 1, 3}, std::vector<double>{0, 1, 0});
  const Var out = conv1d_same(constant(in), constant(w), constant(Tensor({1}, 0.0)));
  EXPECT_EQ(out.value(), in);
}

TEST(Conv1d, BoxFilterWithZeroPadding) {
  const Tensor in({1, 4, 1}, std::vector<double>{1, 1, 1, 1});
  const Tensor w({1, 1, 3}, std::vector<double>{1, 1, 1});
  const Var out = conv1d_same(constant(in), constant(w), constant(Tensor({1}, 0.0)));
  EXPECT_EQ(out.value().values(), (std::vector<double>{2, 3, 3, 2}));
}

TEST(Conv1d, MatchesSlidingWindowOracle) {
  std::mt19937_64 rng(11);
  const std::size_t B = 2, L = 5, C = 3, O = 4;
  const Tensor in = random_tensor({B, L, C}, rng), w = random_tensor({O, C, 3}, rng), b = random_tensor({O}, rng);
  std::vector<oracle::Matrix> oin(B, oracle::Matrix(L, std::vector<double>(C)));
  std::vector<oracle::Matrix> ow(O, oracle::Matrix(C, std::vector<double>(3)));
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < C; ++c) oin[n][t][c] = in[(n * L + t) * C + c];
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < 3; ++k) ow[o][c][k] = w[(o * C + c) * 3 + k];
  const auto expect = oracle::conv1d_same(oin, ow, b.values());
  const Var out = conv1d_same(constant(in), constant(w), constant(b));
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t o = 0; o < O; ++o) EXPECT_NEAR(out.value()[(n * L + t) * O + o], expect[n][t][o], 1e-12);
}

TEST(Conv1d, ChannelMismatchThrows) {
  EXPECT_THROW(conv1d_same(constant(Tensor({1, 4, 2})), constant(Tensor({3, 1, 3})), constant(Tensor({3}))),
               DimensionError);
}

TEST(Conv1d, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Tensor in = random_tensor({2, 4, 2}, rng), w = random_tensor({3, 2, 3}, rng), b = random_tensor({3}, rng);
  const Tensor probe = random_tensor({2, 4, 3}, rng);
  auto wrt_input = [&](const Var& x) { return sum(mul(conv1d_same(x, constant(w), constant(b)), constant(probe))); };
  auto wrt_kernel = [&](const Var& k) { return sum(mul(conv1d_same(constant(in), k, constant(b)), constant(probe))); };
  auto wrt_bias = [&](const Var& bb) { return sum(mul(conv1d_same(constant(in), constant(w), bb), constant(probe))); };
  EXPECT_LT(gradient_check(wrt_input, in, 1e-5), 1e-6);
  EXPECT_LT(gradient_check(wrt_kernel, w, 1e-5), 1e-6);
  EXPECT_LT(gradient_check(wrt_bias, b, 1e-5), 1e-6);
}

// ---------------------------------------------------------------------------
// global_avg_pool

TEST(GlobalAvgPool, LengthOneIsUnchanged) {
  const Tensor in({2, 1, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(global_avg_pool(constant(in)).value().values(), in.values());
}

TEST(GlobalAvgPool, ArithmeticMean) {
  const Tensor in({1, 2, 1}, std::vector<double>{1, 3});
  EXPECT_DOUBLE_EQ(global_avg_pool(constant(in)).value()[0], 2.0);
}

TEST(GlobalAvgPool, MatchesSumOverLength) {
  std::mt19937_64 rng(5);
  const Tensor in = random_tensor({3, 6, 4}, rng);
  const Var out = global_avg_pool(constant(in));
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t c = 0; c < 4; ++c) {
      double s = 0;
      for (std::size_t t = 0; t < 6; ++t) s += in[(n * 6 + t) * 4 + c];
      EXPECT_NEAR(out.value()[n * 4 + c], s / 6.0, 1e-15);
    }
  EXPECT_LT(gradient_check([&](const Var& x) { return sum(square(global_avg_pool(x))); }, in, 1e-5), 1e-6);
}

TEST(GlobalAvgPool, ZeroLengthThrows) {
  EXPECT_THROW(global_avg_pool(constant(Tensor({2, 0, 3}))), DimensionError);
}

// ---------------------------------------------------------------------------
// dropout

TEST(Dropout, EvalModeIsIdentity) {
  std::mt19937_64 rng(1);
  const Tensor in = Tensor::vector({1, 2, 3});
  EXPECT_EQ(dropout(constant(in), 0.5, false, rng).value(), in);
}

TEST(Dropout, ZeroRateIsIdentityInBothModes) {
  std::mt19937_64 rng(1);
  const Tensor in = Tensor::vector({1, 2, 3});
  EXPECT_EQ(dropout(constant(in), 0.0, true, rng).value(), in);
  EXPECT_EQ(dropout(constant(in), 0.0, false, rng).value(), in);
}

TEST(Dropout, SurvivorFrequencyAndScale) {
  std::mt19937_64 rng(2024);
  const std::size_t n = 100000;
  const Var out = dropout(constant(Tensor({n}, 1.0)), 0.2, true, rng);
  std::size_t kept = 0;
  for (double v : out.value().data()) {
    if (v != 0.0) {
      ++kept;
      EXPECT_DOUBLE_EQ(v, 1.25);
    }
  }
  EXPECT_NEAR(static_cast<double>(kept) / n, 0.8, 0.01);
}

TEST(Dropout, BackwardUsesForwardMask) {
  std::mt19937_64 rng(9);
  Var x = leaf(Tensor({1000}, 2.0));
  Var out = dropout(x, 0.3, true, rng);
  backward_pass(sum(out));
  for (std::size_t i = 0; i < 1000; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], out.value()[i] / 2.0);
}

TEST(Dropout, RateOutsideUnitIntervalThrows) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(dropout(constant(Tensor({2})), 1.0, true, rng), ParameterError);
  EXPECT_THROW(dropout(constant(Tensor({2})), -0.1, false, rng), ParameterError);
}

// ---------------------------------------------------------------------------
// gather_rows

TEST(GatherRows, IdentityPermutation) {
  const Tensor in = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(gather_rows(constant(in), {0, 1, 2}).value(), in);
}

TEST(GatherRows, CyclicShift) {
  const Tensor in = Tensor::matrix({{1, 1}, {2, 2}, {3, 3}});
  EXPECT_EQ(gather_rows(constant(in), {2, 0, 1}).value(), Tensor::matrix({{3, 3}, {1, 1}, {2, 2}}));
}

TEST(GatherRows, GradientScattersToSourceRows) {
  Var x = leaf(Tensor::vector({10, 20, 30, 40}));
  Var g = gather_rows(x, {3, 1, 0, 2});
  // weight only the first two output rows, which come from source rows 3 and 1
  backward_pass(sum(mul(g, constant(Tensor::vector({1, 1, 0, 0})))));
  EXPECT_EQ(x.grad(), Tensor::vector({0, 1, 0, 1}));
}

TEST(GatherRows, NonBijectionThrows) {
  EXPECT_THROW(gather_rows(constant(Tensor::vector({1, 2, 3})), {0, 0, 1}), PermutationError);
  EXPECT_THROW(gather_rows(constant(Tensor::vector({1, 2, 3})), {0, 1}), PermutationError);
  EXPECT_THROW(gather_rows(constant(Tensor::vector({1, 2, 3})), {0, 1, 3}), PermutationError);
}

// ---------------------------------------------------------------------------
// backward_pass

TEST(Backward, ScalarSeed) {
  Var x = leaf(Tensor::scalar(3.0));
  backward_pass(x);
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Backward, FanOutAccumulates) {
  Var x = leaf(Tensor::scalar(3.0));
  backward_pass(add(x, x));
  EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Backward, KUsesSumKContributions) {
  for (int k = 1; k <= 5; ++k) {
    Var x = leaf(Tensor::scalar(0.7));
    Var acc = x;
    for (int i = 1; i < k; ++i) acc = add(acc, x);
    backward_pass(acc);
    EXPECT_EQ(x.grad()[0], static_cast<double>(k));
  }
}

TEST(Backward, RootGradIsOne) {
  Var x = leaf(Tensor::vector({1, 2}));
  Var root = sum(square(x));
  backward_pass(root);
  EXPECT_EQ(root.grad()[0], 1.0);
}

TEST(Backward, NonScalarRootThrows) {
  Var x = leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(backward_pass(square(x)), ContractError);
}

TEST(Backward, ReluOfMatmulMatchesCentralDifferences) {
  std::mt19937_64 rng(17);
  const Tensor W = random_tensor({5, 3}, rng);
  const Tensor x = random_tensor({3, 4}, rng);
  auto loss = [&](const Var& w) { return sum(relu(matmul(w, constant(x)))); };
  EXPECT_LT(gradient_check(loss, W, 1e-5), 1e-6);
}

TEST(Backward, DeterministicAcrossRuns) {
  std::mt19937_64 rng(21);
  const Tensor W = random_tensor({4, 4}, rng), x = random_tensor({4, 2}, rng);
  auto run = [&] {
    Var w = leaf(W);
    backward_pass(sum(square(relu(matmul(w, constant(x))))));
    return w.grad();
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, OpsDoNotMutateInputs) {
  std::mt19937_64 rng(4);
  const Tensor a0 = random_tensor({3, 3}, rng), b0 = random_tensor({3, 3}, rng);
  Var a = leaf(a0), b = leaf(b0);
  Var out = sum(square(sub(relu(matmul(a, b)), mul(a, b))));
  backward_pass(out);
  EXPECT_EQ(a.value(), a0);
  EXPECT_EQ(b.value(), b0);
}

// Each remaining differentiable op against central differences at generic points.
TEST(Backward, ElementwiseAndShapeOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(99);
  const Tensor p = random_tensor({6}, rng), q = random_tensor({6}, rng);
  const Tensor m = random_tensor({2, 3}, rng), bias = random_tensor({3}, rng);
  const double tol = 1e-6;
  EXPECT_LT(gradient_check([&](const Var& x) { return sum(square(sub(x, constant(q)))); }, p, 1e-5), tol);
  EXPECT_LT(gradient_check([&](const Var& x) { return dot(x, mul(x, constant(q))); }, p, 1e-5), tol);
  EXPECT_LT(gradient_check([&](const Var& x) { return sum(square(adjacent_diff(x))); }, p, 1e-5), tol);
  EXPECT_LT(gradient_check([&](const Var& x) { return dot(gather_rows(x, {5, 3, 1, 0, 2, 4}), constant(q)); }, p, 1e-5),
            tol);
  EXPECT_LT(gradient_check([&](const Var& x) { return sum(square(add_bias(x, constant(bias)))); }, m, 1e-5), tol);
  EXPECT_LT(gradient_check([&](const Var& b) { return sum(square(add_bias(constant(m), b))); }, bias, 1e-5), tol);
  EXPECT_LT(gradient_check([&](const Var& x) { return sum(square(scale_by(x, sum(x)))); }, p, 1e-5), tol);
  EXPECT_LT(gradient_check([&](const Var& x) { return mean(square(reshape(x, {2, 3}))); }, p, 1e-5), tol);
  EXPECT_LT(gradient_check([&](const Var& x) { return mse(x, q); }, p, 1e-5), tol);
}

// ---------------------------------------------------------------------------
// gradient_check

TEST(GradientCheck, Quadratic) {
  Var x = leaf(Tensor::vector({1, 2}));
  backward_pass(sum(square(x)));
  EXPECT_EQ(x.grad(), Tensor::vector({2, 4}));
  EXPECT_LT(gradient_check([](const Var& v) { return sum(square(v)); }, Tensor::vector({1, 2}), 1e-5), 1e-8);
}

TEST(GradientCheck, LinearLossIsExactUpToRounding) {
  const Tensor c = Tensor::vector({0.5, -1.5, 2.0});
  EXPECT_LT(gradient_check([&](const Var& v) { return dot(v, constant(c)); }, Tensor::vector({1, 2, 3}), 1e-3), 1e-9);
}

TEST(GradientCheck, NonFiniteLossThrows) {
  auto f = [](const Var& v) { return sum(v); };
  auto bad = [](const Tensor&) { return std::nan(""); };
  EXPECT_THROW(gradient_check(f, bad, Tensor::vector({1.0}), 1e-5), NumericError);
  EXPECT_THROW(gradient_check(f, Tensor::vector({1.0}), 0.0), ParameterError);
}
