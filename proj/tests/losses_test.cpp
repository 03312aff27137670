#include <gtest/gtest.h>

#include <cmath>

#include "mlcl/errors.hpp"
#include "mlcl/grad_check.hpp"
#include "mlcl/losses.hpp"
#include "mlcl/ops.hpp"
#include "test_support.hpp"

using namespace mlcl;
using mlcl::testing::random_matrix;

namespace {

double binary_entropy(double z) {
  if (z <= 0.0 || z >= 1.0) return 0.0;
  return -(z * std::log(z) + (1 - z) * std::log(1 - z));
}

double eval_cls(const Matrix& p, const Matrix& y, std::size_t col) {
  Tape t;
  return cls_loss(t.constant(p), y, col).value()(0, 0);
}

double eval_dst(const Matrix& p, const Matrix& z) {
  Tape t;
  return dst_loss(t.constant(p), z).value()(0, 0);
}

}  // namespace

TEST(Cls, PerfectPredictionIsZero) {
  EXPECT_NEAR(eval_cls(Matrix{{1.0, 0.0, 1.0}}, Matrix{{1, 0, 1}}, 0), 0.0, 1e-10);
}

TEST(Cls, HalfProbabilityOnPositive) {
  EXPECT_NEAR(eval_cls(Matrix{{0.5}}, Matrix{{1}}, 0), 0.6931, 1e-4);
  EXPECT_NEAR(eval_cls(Matrix{{0.5}}, Matrix{{1}}, 0), std::log(2.0), 1e-15);
}

TEST(Cls, IndependentLabellingSkipsOldColumns) {
  // Two old columns with terrible predictions, two new columns predicted perfectly.
  const Matrix p{{0.01, 0.99, 1.0, 0.0}};
  EXPECT_NEAR(eval_cls(p, Matrix{{1, 0}}, 2), 0.0, 1e-10);
  EXPECT_GT(eval_cls(p, Matrix{{1, 0, 1, 0}}, 0), 4.0);
  Tape t;
  Var probs = t.variable(p);
  t.backward(cls_loss(probs, Matrix{{1, 0}}, 2));
  EXPECT_EQ(probs.grad()(0, 0), 0.0);
  EXPECT_EQ(probs.grad()(0, 1), 0.0);
}

TEST(Cls, BatchMeanOfClassSums) {
  const Matrix p{{0.5, 0.5}, {0.25, 0.75}};
  const Matrix y{{1, 0}, {1, 1}};
  const double expect = (2 * std::log(2.0) - std::log(0.25) - std::log(0.75)) / 2;
  EXPECT_NEAR(eval_cls(p, y, 0), expect, 1e-14);
  EXPECT_THROW(eval_cls(p, Matrix(2, 3), 0), DimensionError);
}

TEST(Dst, MinimumIsEntropyOfTargets) {
  const Matrix z{{0.2, 0.7, 0.5}};
  double entropy = 0;
  for (double v : z.data()) entropy += binary_entropy(v);
  EXPECT_NEAR(eval_dst(z, z), entropy, 1e-12);
  EXPECT_NEAR(eval_dst(Matrix{{1.0 - 1e-12}}, Matrix{{1.0}}), 0.0, 1e-9);
  EXPECT_NEAR(eval_dst(Matrix{{0.5}}, Matrix{{0.5}}), std::log(2.0), 1e-15);
}

TEST(Dst, GradientSignsPointTowardTargets) {
  const Matrix z{{0.3, 0.8}};
  for (double delta : {-0.05, 0.05}) {
    Tape t;
    Var p = t.variable(Matrix{{0.3 + delta, 0.8 + delta}});
    t.backward(dst_loss(p, z));
    for (std::size_t c = 0; c < 2; ++c) {
      // Above the target the loss increases with p, below it decreases.
      EXPECT_EQ(p.grad()(0, c) > 0.0, delta > 0);
    }
  }
  Tape t;
  Var p = t.variable(z);
  t.backward(dst_loss(p, z));
  for (double g : p.grad().data()) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(Dst, OnlyOldColumnsCount) {
  const Matrix p{{0.4, 0.9, 0.1}};
  EXPECT_EQ(eval_dst(p, Matrix{{0.4, 0.9}}), eval_dst(Matrix{{0.4, 0.9}}, Matrix{{0.4, 0.9}}));
}

TEST(Gph, SquaredErrorOverOldOutputs) {
  Tape t;
  EXPECT_EQ(gph_loss(t.constant(Matrix{{0.5, 2.0}}), Matrix{{0.5, 2.0}}).value()(0, 0), 0.0);
  EXPECT_EQ(gph_loss(t.constant(Matrix{{0.0, 0.0, 9.0}}), Matrix{{1.0, 2.0}}).value()(0, 0), 5.0);
  const double a = gph_loss(t.constant(Matrix{{0.1, 0.2, 3.0}}), Matrix{{1.0, 2.0}}).value()(0, 0);
  const double b = gph_loss(t.constant(Matrix{{0.1, 0.2, -7.0}}), Matrix{{1.0, 2.0}}).value()(0, 0);
  EXPECT_EQ(a, b);
}

TEST(Gph, NoGradientIntoNewOutputs) {
  Rng rng(1);
  Tape t;
  Var g = t.variable(random_matrix(3, 5, rng));
  t.backward(gph_loss(g, random_matrix(3, 2, rng)));
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 2; c < 5; ++c) EXPECT_EQ(g.grad()(r, c), 0.0);
    EXPECT_NE(g.grad()(r, 0), 0.0);
  }
}

TEST(Losses, NonNegativeOnRandomInputs) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix p = random_matrix(4, 3, rng, 1e-6, 1 - 1e-6), z = random_matrix(4, 3, rng, 0, 1);
    Matrix y(4, 3);
    for (double& v : y.data()) v = rng.uniform() < 0.5;
    Tape t;
    EXPECT_GE(cls_loss(t.constant(p), y, 0).value()(0, 0), 0.0);
    EXPECT_GE(dst_loss(t.constant(p), z).value()(0, 0), 0.0);
    EXPECT_GE(gph_loss(t.constant(p), z).value()(0, 0), 0.0);
  }
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  Parameter logits{"logits", random_matrix(3, 4, rng)};
  Parameter graph{"graph", random_matrix(3, 4, rng)};
  const Matrix z = random_matrix(3, 2, rng, 0, 1), target = random_matrix(3, 2, rng);
  Matrix y(3, 2);
  for (double& v : y.data()) v = rng.uniform() < 0.5;
  std::vector<Parameter*> params = {&logits, &graph};
  const auto report = grad_check(params, [&](Tape& t) {
    Var probs = ad::sigmoid(ad::add(t.parameter(logits), t.parameter(graph)));
    LossParts parts{cls_loss(probs, y, 2), dst_loss(probs, z), gph_loss(t.parameter(graph), target)};
    return total_loss(LossWeights{0.4, 0.6, 3.0}, parts);
  });
  EXPECT_TRUE(report.passed()) << report.to_table();
}

TEST(Total, WeightedSumAndDegenerateWeights) {
  Tape t;
  LossParts parts{t.constant(Matrix{{2.0}}), t.constant(Matrix{{3.0}}), t.constant(Matrix{{5.0}})};
  EXPECT_DOUBLE_EQ(total_loss({0.5, 0.25, 0.1}, parts).value()(0, 0), 1.0 + 0.75 + 0.5);
  EXPECT_DOUBLE_EQ(total_loss({0.7, 0.0, 0.0}, parts).value()(0, 0), 0.7 * 2.0);
  LossParts first_task{parts.cls, Var(), Var()};
  EXPECT_DOUBLE_EQ(total_loss({0.1, 0.9, 1e4}, first_task).value()(0, 0), 0.2);
}

TEST(Total, NegativeWeightIsConfigError) {
  Tape t;
  LossParts parts{t.constant(Matrix{{1.0}}), Var(), Var()};
  EXPECT_THROW(total_loss({-1.0, 0, 0}, parts), ConfigError);
  EXPECT_THROW(total_loss({1.0, -0.1, 0}, parts), ConfigError);
  EXPECT_THROW(total_loss({1.0, 0, -2}, parts), ConfigError);
  EXPECT_THROW(total_loss({0.0, 1, 1}, parts), ConfigError);
}

TEST(Presets, PublishedWeights) {
  const auto wide_il = preset_weights(Benchmark::SplitWide, Scenario::IL);
  EXPECT_EQ(wide_il.cls, 0.10);
  EXPECT_EQ(wide_il.dst, 0.90);
  EXPECT_EQ(wide_il.gph, 1e4);
  const auto wide_cl = preset_weights(Benchmark::SplitWide, Scenario::CL);
  EXPECT_EQ(wide_cl.cls, 0.70);
  EXPECT_EQ(wide_cl.dst, 0.30);
  EXPECT_EQ(wide_cl.gph, 1e3);
  const auto coco_il = preset_weights(Benchmark::SplitCoco, Scenario::IL);
  EXPECT_EQ(coco_il.cls, 0.15);
  EXPECT_EQ(coco_il.dst, 0.85);
  EXPECT_EQ(coco_il.gph, 1e4);
  const auto coco_cl = preset_weights(Benchmark::SplitCoco, Scenario::CL);
  EXPECT_EQ(coco_cl.cls, 0.40);
  EXPECT_EQ(coco_cl.dst, 0.60);
  EXPECT_EQ(coco_cl.gph, 1e4);
}
