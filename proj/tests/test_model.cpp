#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "comfed/model.hpp"

using namespace comfed;

namespace {

Dataset random_dataset(std::size_t n, std::size_t d, int k, std::mt19937_64& eng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, k - 1);
  Dataset ds;
  ds.dim = d;
  ds.num_classes = k;
  for (std::size_t i = 0; i < n * d; ++i) ds.features.push_back(normal(eng));
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(label(eng));
  return ds;
}

ParamVector random_params(std::size_t n, double scale, std::mt19937_64& eng) {
  std::normal_distribution<double> normal(0.0, scale);
  ParamVector p(n);
  for (auto& x : p) x = normal(eng);
  return p;
}

double max_rel_err(const ParamVector& analytic, const ParamVector& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i])));
  return worst;
}

}  // namespace

TEST(Model, ParamCount) {
  EXPECT_EQ((ModelSpec{ModelKind::logistic, 4, 3}.param_count()), 15u);
  EXPECT_EQ((ModelSpec{ModelKind::mlp1, 4, 3, 5}.param_count()), 5u * 5 + 6u * 3);
}

TEST(Model, InitParams) {
  const ModelSpec spec{ModelKind::logistic, 4, 3};
  auto p = init_params(spec, 7);
  ASSERT_EQ(p.size(), 15u);
  for (std::size_t k = 12; k < 15; ++k) EXPECT_EQ(p[k], 0.0);
  EXPECT_EQ(p, init_params(spec, 7));
  EXPECT_NE(p, init_params(spec, 8));

  const ModelSpec mlp{ModelKind::mlp1, 4, 3, 5};
  auto q = init_params(mlp, 7);
  for (std::size_t j = 20; j < 25; ++j) EXPECT_EQ(q[j], 0.0);  // b1
  for (std::size_t k = 40; k < 43; ++k) EXPECT_EQ(q[k], 0.0);  // b2
}

TEST(Model, ZeroParamsGiveLogK) {
  std::mt19937_64 eng(3);
  for (int k : {2, 3, 10}) {
    auto ds = random_dataset(9, 4, k, eng);
    const ModelSpec spec{ModelKind::logistic, 4, static_cast<std::size_t>(k)};
    auto lg = loss_and_grad(spec, ParamVector(spec.param_count(), 0.0), BatchView(ds));
    EXPECT_NEAR(lg.loss, std::log(static_cast<double>(k)), 1e-15);
  }
}

TEST(Model, GradientMatchesFiniteDifferences) {
  std::mt19937_64 eng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 6), classes(2, 5), hidden(1, 6), rows(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    for (auto kind : {ModelKind::logistic, ModelKind::mlp1}) {
      ModelSpec spec{kind, dim(eng), classes(eng), hidden(eng), trial % 2 ? Activation::tanh : Activation::relu};
      auto ds = random_dataset(rows(eng), spec.input_dim, static_cast<int>(spec.num_classes), eng);
      auto p = random_params(spec.param_count(), 0.7, eng);
      auto analytic = loss_and_grad(spec, p, BatchView(ds)).grad;
      auto numeric = finite_diff_grad(spec, p, BatchView(ds), 1e-5);
      EXPECT_LT(max_rel_err(analytic, numeric), 1e-5) << "trial " << trial;
    }
  }
}

TEST(Model, DuplicatedBatchGivesSameLossAndGrad) {
  std::mt19937_64 eng(5);
  const ModelSpec spec{ModelKind::mlp1, 3, 4, 5, Activation::tanh};
  auto ds = random_dataset(6, 3, 4, eng);
  auto p = random_params(spec.param_count(), 0.5, eng);
  std::vector<std::size_t> once(6), twice;
  std::iota(once.begin(), once.end(), std::size_t{0});
  for (auto i : once) {
    twice.push_back(i);
    twice.push_back(i);
  }
  auto a = loss_and_grad(spec, p, BatchView(ds, once));
  auto b = loss_and_grad(spec, p, BatchView(ds, twice));
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  EXPECT_LT(max_abs_diff(a.grad, b.grad), 1e-12);
}

TEST(Model, PermutingRowsChangesLossNegligibly) {
  std::mt19937_64 eng(9);
  const ModelSpec spec{ModelKind::logistic, 5, 3};
  auto ds = random_dataset(32, 5, 3, eng);
  auto p = random_params(spec.param_count(), 1.0, eng);
  std::vector<std::size_t> order(32);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double base = loss_and_grad(spec, p, BatchView(ds, order)).loss;
  for (int t = 0; t < 20; ++t) {
    std::shuffle(order.begin(), order.end(), eng);
    EXPECT_LT(std::abs(loss_and_grad(spec, p, BatchView(ds, order)).loss - base), 1e-12);
  }
}

// 1-D logistic, K=2, one sample: dL/dw_k = (p_k - [k=y]) x, dL/db_k = p_k - [k=y].
TEST(Model, FiniteDiffMatchesHandDerivative) {
  Dataset ds{1, 2, {2.0}, {1}};
  const ModelSpec spec{ModelKind::logistic, 1, 2};
  const ParamVector p{0.5, -0.25, 0.1, 0.2};
  const double z0 = 0.5 * 2.0 + 0.1, z1 = -0.25 * 2.0 + 0.2;
  const double p0 = std::exp(z0) / (std::exp(z0) + std::exp(z1));
  const double p1 = 1.0 - p0;
  const ParamVector hand{p0 * 2.0, (p1 - 1.0) * 2.0, p0, p1 - 1.0};
  auto fd = finite_diff_grad(spec, p, BatchView(ds), 1e-5);
  EXPECT_LT(max_abs_diff(fd, hand), 1e-9);
  EXPECT_LT(max_abs_diff(loss_and_grad(spec, p, BatchView(ds)).grad, hand), 1e-15);
}

TEST(Model, FiniteDiffStepConsistency) {
  std::mt19937_64 eng(21);
  const ModelSpec spec{ModelKind::mlp1, 3, 3, 4, Activation::tanh};
  auto ds = random_dataset(5, 3, 3, eng);
  auto p = random_params(spec.param_count(), 0.5, eng);
  auto a = finite_diff_grad(spec, p, BatchView(ds), 1e-5);
  auto b = finite_diff_grad(spec, p, BatchView(ds), 1e-6);
  EXPECT_LT(max_rel_err(a, b), 1e-6);
}

TEST(Model, ZeroGradientAtSymmetricPoint) {
  Dataset ds{1, 2, {0.0, 0.0}, {0, 1}};
  const ModelSpec spec{ModelKind::logistic, 1, 2};
  auto fd = finite_diff_grad(spec, ParamVector(4, 0.0), BatchView(ds), 1e-5);
  for (double g : fd) EXPECT_NEAR(g, 0.0, 1e-10);
  EXPECT_THROW(finite_diff_grad(spec, ParamVector(4, 0.0), BatchView(ds), 0.0), std::invalid_argument);
}

TEST(Model, EvaluateSeparableBlobs) {
  // Class 0 near x=-1, class 1 near x=+1; W = [-1, 1] separates them.
  Dataset ds{1, 2, {-1.2, -0.9, -1.0, 0.8, 1.1, 1.3}, {0, 0, 0, 1, 1, 1}};
  const ModelSpec spec{ModelKind::logistic, 1, 2};
  auto ev = evaluate(spec, ParamVector{-1.0, 1.0, 0.0, 0.0}, BatchView(ds));
  EXPECT_EQ(ev.accuracy, 1.0);
  EXPECT_GE(ev.loss, 0.0);
}

TEST(Model, EvaluateTieBreaksToLowestClass) {
  Dataset ds{1, 2, {0.3, -0.7, 1.5, 2.0}, {0, 1, 0, 1}};
  const ModelSpec spec{ModelKind::logistic, 1, 2};
  auto ev = evaluate(spec, ParamVector(4, 0.0), BatchView(ds));
  EXPECT_EQ(ev.accuracy, 0.5);
  EXPECT_NEAR(ev.loss, std::log(2.0), 1e-15);

  Dataset one{1, 2, {2.0}, {1}};
  EXPECT_EQ(evaluate(spec, ParamVector{0.0, 1.0, 0.0, 0.0}, BatchView(one)).accuracy, 1.0);
}

TEST(Model, EvaluateRanges) {
  std::mt19937_64 eng(13);
  for (int t = 0; t < 20; ++t) {
    const ModelSpec spec{ModelKind::mlp1, 4, 3, 6};
    auto ds = random_dataset(15, 4, 3, eng);
    auto ev = evaluate(spec, random_params(spec.param_count(), 2.0, eng), BatchView(ds));
    EXPECT_GE(ev.accuracy, 0.0);
    EXPECT_LE(ev.accuracy, 1.0);
    EXPECT_GE(ev.loss, 0.0);
  }
}

TEST(Model, RejectsBadInputs) {
  Dataset ds{1, 2, {1.0}, {1}};
  const ModelSpec spec{ModelKind::logistic, 1, 2};
  EXPECT_THROW(loss_and_grad(spec, ParamVector(3, 0.0), BatchView(ds)), LengthMismatchError);
  Dataset bad{1, 2, {1.0}, {2}};
  EXPECT_THROW(loss_and_grad(spec, ParamVector(4, 0.0), BatchView(bad)), std::invalid_argument);
  EXPECT_THROW(loss_and_grad(spec, ParamVector{1e308, 0, 0, 0}, BatchView(Dataset{1, 2, {1e10}, {1}})),
               NonFiniteError);
}
