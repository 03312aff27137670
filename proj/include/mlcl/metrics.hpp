#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlcl/matrix.hpp"

namespace mlcl {

// AP of one class: mean over positives of precision at the positive's rank. Ranking is by
// descending score with ties broken by lower example index. Throws EvaluationError if
// the column has no positive.
double average_precision(std::span<const double> scores, std::span<const double> truth);

// Mean AP over classes with at least one positive, as a fraction. Throws EvaluationError
// on an empty batch or if no class has a positive.
double mean_average_precision(const Matrix& scores, const Matrix& truth);

struct PrfMetrics {
  double cp = 0, cr = 0, cf1 = 0;
  double op = 0, orc = 0, of1 = 0;  // overall precision / recall / F1
};

// Predictions are scores >= threshold. Per-class averages run over classes with at least
// one positive; every 0/0 is 0.
PrfMetrics prf_metrics(const Matrix& scores, const Matrix& truth, double threshold = 0.5);

// All seven metrics in percent.
struct MetricReport {
  double map = 0, cp = 0, cr = 0, cf1 = 0, op = 0, orc = 0, of1 = 0;
};

MetricReport evaluate(const Matrix& scores, const Matrix& truth, double threshold = 0.5);

double harmonic_mean(double a, double b);

// a[l, j]: a metric after training task l on task j's test set, l >= j (0-based).
class HistoryMatrix {
 public:
  HistoryMatrix() = default;
  explicit HistoryMatrix(std::size_t tasks);

  std::size_t tasks() const noexcept { return tasks_; }
  void set(std::size_t l, std::size_t j, double value);
  double at(std::size_t l, std::size_t j) const;
  bool has(std::size_t l, std::size_t j) const;
  // Every entry with l >= j for l <= last is present.
  bool complete_through(std::size_t last) const;

 private:
  std::size_t tasks_ = 0;
  std::vector<std::optional<double>> values_;
};

struct ForgettingReport {
  std::vector<double> per_task;  // f_j for j < last
  double average = 0;
};

// f_j = max_{l < last} a[l, j] - a[last, j], averaged over j < last. EvaluationError if
// last == 0 or the history is incomplete.
ForgettingReport forgetting(const HistoryMatrix& history, std::size_t last);

}  // namespace mlcl
