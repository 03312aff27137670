#include <gtest/gtest.h>

#include <cmath>

#include "metric_oracle.hpp"
#include "mlcl/errors.hpp"
#include "mlcl/metrics.hpp"
#include "mlcl/random.hpp"

using namespace mlcl;

namespace {

std::vector<double> col(std::initializer_list<double> v) { return v; }

void random_batch(Rng& rng, Matrix& s, Matrix& y) {
  const std::size_t n = 1 + rng.below(500), k = 1 + rng.below(20);
  s = Matrix(n, k);
  y = Matrix(n, k);
  const double rate = 0.05 + 0.5 * rng.uniform();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      y(r, c) = rng.uniform() < rate;
      // Coarse scores create ties.
      s(r, c) = std::round(rng.uniform() * 20) / 20;
    }
  }
  y(rng.below(n), rng.below(k)) = 1.0;
}

}  // namespace

TEST(AveragePrecision, PerfectRankingIsOne) {
  EXPECT_EQ(average_precision(col({0.9, 0.8, 0.1, 0.05}), col({1, 1, 0, 0})), 1.0);
}

TEST(AveragePrecision, HandRankings) {
  EXPECT_NEAR(average_precision(col({0.9, 0.8, 0.7}), col({1, 0, 1})), (1.0 + 2.0 / 3.0) / 2, 1e-15);
  EXPECT_NEAR(average_precision(col({0.9, 0.8, 0.7}), col({1, 0, 1})), 0.8333, 1e-4);
  EXPECT_EQ(average_precision(col({0.4, 0.3, 0.2, 0.1}), col({0, 0, 0, 1})), 0.25);
}

TEST(AveragePrecision, TiesBreakByIndex) {
  EXPECT_EQ(average_precision(col({0.5, 0.5}), col({1, 0})), 1.0);
  EXPECT_EQ(average_precision(col({0.5, 0.5}), col({0, 1})), 0.5);
}

TEST(AveragePrecision, InvariantUnderMonotoneTransform) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(30), y(30), t(30);
    for (std::size_t i = 0; i < 30; ++i) {
      s[i] = rng.uniform();
      y[i] = rng.uniform() < 0.3;
      t[i] = std::exp(3 * s[i]) - 7;
    }
    y[0] = 1;
    EXPECT_EQ(average_precision(s, y), average_precision(t, y));
  }
}

TEST(AveragePrecision, NoPositiveOrEmptyIsError) {
  EXPECT_THROW(average_precision(col({0.3, 0.2}), col({0, 0})), EvaluationError);
  EXPECT_THROW(mean_average_precision(Matrix(0, 3), Matrix(0, 3)), EvaluationError);
  EXPECT_THROW(mean_average_precision(Matrix(2, 2, 0.3), Matrix(2, 2)), EvaluationError);
}

TEST(MeanAveragePrecision, SkipsClassesWithoutPositives) {
  const Matrix s{{0.9, 0.1}, {0.8, 0.7}, {0.7, 0.2}};
  const Matrix y{{1, 0}, {0, 0}, {1, 0}};
  EXPECT_NEAR(mean_average_precision(s, y), (1.0 + 2.0 / 3.0) / 2, 1e-15);
}

TEST(Prf, PerfectClassifierIsHundred) {
  const Matrix y{{1, 0, 1}, {0, 1, 0}};
  const auto r = evaluate(y, y);
  for (double v : {r.map, r.cp, r.cr, r.cf1, r.op, r.orc, r.of1}) EXPECT_EQ(v, 100.0);
}

TEST(Prf, HandCountedExample) {
  const Matrix y{{1, 0}, {1, 1}};
  const Matrix p{{1, 1}, {0, 1}};
  const auto m = prf_metrics(p, y);
  EXPECT_EQ(m.op, 2.0 / 3.0);
  EXPECT_EQ(m.orc, 2.0 / 3.0);
  EXPECT_EQ(m.of1, 2.0 / 3.0);
  EXPECT_EQ(m.cp, 0.75);
  EXPECT_EQ(m.cr, 0.75);
  EXPECT_EQ(m.cf1, 0.75);
}

TEST(Prf, NoPredictedPositives) {
  const auto m = prf_metrics(Matrix(3, 2, 0.1), Matrix{{1, 0}, {0, 1}, {1, 1}});
  EXPECT_EQ(m.op, 0.0);
  EXPECT_EQ(m.of1, 0.0);
  EXPECT_EQ(m.cp, 0.0);
}

TEST(Prf, ThresholdIsInclusiveAndValidated) {
  EXPECT_EQ(prf_metrics(Matrix{{0.5}}, Matrix{{1}}).op, 1.0);
  EXPECT_THROW(prf_metrics(Matrix{{0.5}}, Matrix{{1}}, 0.0), ConfigError);
  EXPECT_THROW(prf_metrics(Matrix{{0.5}}, Matrix{{1}}, 1.0), ConfigError);
}

TEST(Prf, MatchesBruteForceOnRandomBatches) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix s, y;
    random_batch(rng, s, y);
    const auto got = evaluate(s, y);
    const auto want = oracle::brute_all(s, y, 0.5);
    EXPECT_NEAR(got.map, 100 * want.map, 1e-9);
    EXPECT_NEAR(got.cp, 100 * want.cp, 1e-9);
    EXPECT_NEAR(got.cr, 100 * want.cr, 1e-9);
    EXPECT_NEAR(got.cf1, 100 * want.cf1, 1e-9);
    EXPECT_NEAR(got.op, 100 * want.op, 1e-9);
    EXPECT_NEAR(got.orc, 100 * want.orc, 1e-9);
    EXPECT_NEAR(got.of1, 100 * want.of1, 1e-9);
    for (double v : {got.map, got.cp, got.cr, got.cf1, got.op, got.orc, got.of1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
  }
}

TEST(History, LowerTriangleOnly) {
  HistoryMatrix h(3);
  h.set(0, 0, 0.5);
  h.set(2, 1, 0.4);
  EXPECT_THROW(h.set(0, 1, 0.3), ContractError);
  EXPECT_THROW(h.set(3, 0, 0.3), ContractError);
  EXPECT_TRUE(h.has(2, 1));
  EXPECT_FALSE(h.has(1, 0));
  EXPECT_THROW(h.at(1, 0), EvaluationError);
  EXPECT_FALSE(h.complete_through(1));
}

TEST(Forgetting, ConstantHistoryIsZero) {
  HistoryMatrix h(4);
  for (std::size_t l = 0; l < 4; ++l) {
    for (std::size_t j = 0; j <= l; ++j) h.set(l, j, 0.3 + 0.1 * static_cast<double>(j));
  }
  const auto f = forgetting(h, 3);
  EXPECT_EQ(f.average, 0.0);
  EXPECT_EQ(f.per_task, std::vector<double>(3, 0.0));
}

TEST(Forgetting, TwoTaskHandCase) {
  HistoryMatrix h(2);
  h.set(0, 0, 0.8);
  h.set(1, 0, 0.6);
  h.set(1, 1, 0.9);
  const auto f = forgetting(h, 1);
  EXPECT_NEAR(f.per_task[0], 0.2, 1e-15);
  EXPECT_NEAR(f.average, 0.2, 1e-15);
}

TEST(Forgetting, ImprovementGivesNegativeValue) {
  HistoryMatrix h(3);
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t j = 0; j <= l; ++j) h.set(l, j, 0.1 * static_cast<double>(l + 1));
  }
  EXPECT_LE(forgetting(h, 2).average, 0.0);
}

TEST(Forgetting, UsesMaxOverEarlierCheckpoints) {
  HistoryMatrix h(4);
  const double a[4][4] = {{0.5}, {0.7, 0.6}, {0.4, 0.65, 0.9}, {0.3, 0.2, 0.85, 0.5}};
  for (std::size_t l = 0; l < 4; ++l) {
    for (std::size_t j = 0; j <= l; ++j) h.set(l, j, a[l][j]);
  }
  // Second path: the best of every earlier row minus the last row, summed then averaged.
  double total = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    double best = -1;
    for (std::size_t l = 0; l < 3; ++l) {
      if (l >= j) best = std::max(best, a[l][j]);
    }
    total += best - a[3][j];
  }
  const auto f = forgetting(h, 3);
  EXPECT_NEAR(f.average, total / 3, 1e-15);
  EXPECT_NEAR(f.per_task[0], 0.4, 1e-15);
  EXPECT_NEAR(f.per_task[1], 0.45, 1e-15);
  EXPECT_NEAR(f.per_task[2], 0.05, 1e-15);
}

TEST(Forgetting, SingleTaskOrIncompleteIsError) {
  HistoryMatrix h(2);
  h.set(0, 0, 0.5);
  EXPECT_THROW(forgetting(h, 0), EvaluationError);
  EXPECT_THROW(forgetting(h, 1), EvaluationError);
}
