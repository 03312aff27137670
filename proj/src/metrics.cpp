#include "mlcl/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "mlcl/errors.hpp"

namespace mlcl {

namespace {

void check_batch(const Matrix& scores, const Matrix& truth) {
  if (!scores.same_shape(truth)) {
    throw DimensionError("scores " + scores.shape_string() + " vs truth " + truth.shape_string());
  }
  if (scores.rows() == 0 || scores.cols() == 0) throw EvaluationError("empty evaluation batch");
}

double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

}  // namespace

double harmonic_mean(double a, double b) { return a + b == 0.0 ? 0.0 : 2.0 * a * b / (a + b); }

double average_precision(std::span<const double> scores, std::span<const double> truth) {
  if (scores.size() != truth.size()) throw DimensionError("average_precision: length mismatch");
  if (scores.empty()) throw EvaluationError("average_precision: empty column");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0, total = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (truth[order[rank]] != 0.0) {
      hits += 1;
      total += hits / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) throw EvaluationError("average_precision: class has no positive");
  return total / hits;
}

double mean_average_precision(const Matrix& scores, const Matrix& truth) {
  check_batch(scores, truth);
  const Matrix s = transpose(scores), y = transpose(truth);
  double total = 0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < s.rows(); ++c) {
    const auto yc = y.row(c);
    if (std::none_of(yc.begin(), yc.end(), [](double v) { return v != 0.0; })) continue;
    total += average_precision(s.row(c), yc);
    ++used;
  }
  if (used == 0) throw EvaluationError("no class in the batch has a positive");
  return total / static_cast<double>(used);
}

PrfMetrics prf_metrics(const Matrix& scores, const Matrix& truth, double threshold) {
  check_batch(scores, truth);
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0, 1)");
  const std::size_t k = scores.cols();
  std::vector<double> correct(k, 0), predicted(k, 0), positive(k, 0);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      const bool p = scores(r, c) >= threshold, g = truth(r, c) != 0.0;
      predicted[c] += p;
      positive[c] += g;
      correct[c] += p && g;
    }
  }
  PrfMetrics m;
  double sc = 0, sp = 0, sg = 0, cp = 0, cr = 0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    sc += correct[c];
    sp += predicted[c];
    sg += positive[c];
    if (positive[c] == 0) continue;
    cp += safe_div(correct[c], predicted[c]);
    cr += safe_div(correct[c], positive[c]);
    ++used;
  }
  m.cp = safe_div(cp, static_cast<double>(used));
  m.cr = safe_div(cr, static_cast<double>(used));
  m.cf1 = harmonic_mean(m.cp, m.cr);
  m.op = safe_div(sc, sp);
  m.orc = safe_div(sc, sg);
  m.of1 = harmonic_mean(m.op, m.orc);
  return m;
}

MetricReport evaluate(const Matrix& scores, const Matrix& truth, double threshold) {
  const PrfMetrics p = prf_metrics(scores, truth, threshold);
  MetricReport r;
  r.map = 100.0 * mean_average_precision(scores, truth);
  r.cp = 100.0 * p.cp;
  r.cr = 100.0 * p.cr;
  r.cf1 = 100.0 * p.cf1;
  r.op = 100.0 * p.op;
  r.orc = 100.0 * p.orc;
  r.of1 = 100.0 * p.of1;
  return r;
}

HistoryMatrix::HistoryMatrix(std::size_t tasks) : tasks_(tasks), values_(tasks * tasks) {}

void HistoryMatrix::set(std::size_t l, std::size_t j, double value) {
  if (l >= tasks_ || j > l) {
    throw ContractError("history entry (" + std::to_string(l + 1) + ", " + std::to_string(j + 1) +
                        ") outside the lower triangle");
  }
  values_[l * tasks_ + j] = value;
}

bool HistoryMatrix::has(std::size_t l, std::size_t j) const {
  return l < tasks_ && j <= l && values_[l * tasks_ + j].has_value();
}

double HistoryMatrix::at(std::size_t l, std::size_t j) const {
  if (!has(l, j)) {
    throw EvaluationError("history entry (" + std::to_string(l + 1) + ", " + std::to_string(j + 1) +
                          ") is missing");
  }
  return *values_[l * tasks_ + j];
}

bool HistoryMatrix::complete_through(std::size_t last) const {
  for (std::size_t l = 0; l <= last; ++l) {
    for (std::size_t j = 0; j <= l; ++j) {
      if (!has(l, j)) return false;
    }
  }
  return true;
}

ForgettingReport forgetting(const HistoryMatrix& h, std::size_t last) {
  if (last == 0) throw EvaluationError("forgetting needs at least two tasks");
  if (!h.complete_through(last)) throw EvaluationError("forgetting: history is incomplete");
  ForgettingReport out;
  for (std::size_t j = 0; j < last; ++j) {
    double best = h.at(j, j);
    for (std::size_t l = j + 1; l < last; ++l) best = std::max(best, h.at(l, j));
    out.per_task.push_back(best - h.at(last, j));
  }
  out.average = std::accumulate(out.per_task.begin(), out.per_task.end(), 0.0) /
                static_cast<double>(last);
  return out;
}

}  // namespace mlcl
