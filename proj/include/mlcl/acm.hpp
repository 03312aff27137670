#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mlcl/matrix.hpp"
#include "mlcl/stream.hpp"

namespace mlcl {

// Streaming label statistics for one task. Indices: i over the m old classes, j over
// the n new classes (both in C_seen^t column order).
class CoocCounters {
 public:
  CoocCounters() = default;
  CoocCounters(std::size_t old_classes, std::size_t new_classes);

  std::size_t old_classes() const noexcept { return m_; }
  std::size_t new_classes() const noexcept { return n_; }

  // Rows are binary label vectors. Width m+n (continuous labelling, old and new classes)
  // or n (new classes only). An empty batch is a no-op.
  void update_hard(const Matrix& labels);
  // soft: batch x m expert probabilities, hard_new: batch x n binary new-class labels.
  // Throws ContractError if a soft entry lies outside [0, 1].
  void update_soft(const Matrix& soft, const Matrix& hard_new);
  void merge(const CoocCounters& other);

  // N_ab with a over C_seen^t (old first), b over new classes.
  std::uint64_t pair(std::size_t a, std::size_t b) const { return pair_.at(a * n_ + b); }
  std::uint64_t new_count(std::size_t j) const { return new_count_.at(j); }
  std::uint64_t old_count(std::size_t i) const { return old_count_.at(i); }
  double soft_sum(std::size_t i) const { return soft_sum_.at(i); }
  double soft_pair(std::size_t i, std::size_t j) const { return soft_pair_(i, j); }
  std::uint64_t examples() const noexcept { return examples_; }

  friend bool operator==(const CoocCounters&, const CoocCounters&) = default;

 private:
  std::size_t m_ = 0, n_ = 0;
  std::vector<std::uint64_t> pair_;       // (m+n) x n
  std::vector<std::uint64_t> new_count_;  // n
  std::vector<std::uint64_t> old_count_;  // m
  std::vector<double> soft_sum_;          // m
  Matrix soft_pair_;                      // m x n
  std::uint64_t examples_ = 0;
};

struct AcmBlocks {
  Matrix B;  // n x n, B(i, j) = P(new_i | new_j)
  Matrix R;  // m x n, R(i, j) = P(old_i | new_j)
  Matrix Q;  // n x m, Q(j, i) = P(new_j | old_i)
};

// num / den clamped to [0, 1]; 0 when den == 0.
double clamped_ratio(double num, double den);

AcmBlocks assemble_blocks(const CoocCounters& counters, Scenario mode);

// Square matrix over C_seen^t with entry (a, b) = P(a | b).
struct ACMatrix {
  Matrix values;
  std::size_t boundary = 0;  // |C_seen^{t-1}|
  std::size_t task = 0;      // 0-based
  Scenario mode = Scenario::CL;

  std::size_t size() const noexcept { return values.rows(); }
};

// prev == nullptr for the first task, where the result is B.
ACMatrix augment(const ACMatrix* prev, const AcmBlocks& blocks, std::size_t task, Scenario mode);

// Same as above but with R and Q zeroed (inter-task blocks ablated).
AcmBlocks without_inter_task(AcmBlocks blocks);

struct NormalizeOptions {
  // If set, off-diagonal entries >= threshold become 1 and the rest 0 before normalising.
  std::optional<double> binarize_threshold;
};

// D^{-1}(A + I), D the row sums of A + I.
Matrix normalize_for_gcn(const Matrix& a, const NormalizeOptions& options = {});

// Reference ACM over C_seen^t from complete hard labels of each task's training set.
// Block (a, b) uses the training data of the task that introduced the later of the two
// classes, exactly as the streaming construction sees it in continual labelling.
Matrix oracle_acm(const TaskStream& stream, std::size_t t);

// Frobenius norm of a - b over off-diagonal entries.
double acm_distance(const Matrix& a, const Matrix& b);

std::string format_acm(const ACMatrix& acm);
ACMatrix parse_acm(const std::string& text);
void save_acm(const std::filesystem::path& path, const ACMatrix& acm);
ACMatrix load_acm(const std::filesystem::path& path);

}  // namespace mlcl
