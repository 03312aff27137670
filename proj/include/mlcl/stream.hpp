#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mlcl/matrix.hpp"
#include "mlcl/random.hpp"

namespace mlcl {

struct LabeledExample {
  std::vector<double> features;
  // Sorted, unique global class indices; never empty.
  std::vector<std::size_t> labels;

  bool has_label(std::size_t c) const;
  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

using Dataset = std::vector<LabeledExample>;

// IL: only the current task's classes are annotated at training time.
// CL: every class seen so far is annotated.
enum class Scenario { IL, CL };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& text);

struct TaskSpec {
  std::size_t index = 0;  // 0-based
  std::vector<std::size_t> classes;
};

// Ground truth for the synthetic generator.
struct CooccurrenceSpec {
  std::vector<double> marginals;  // P(class present)
  Matrix joint;                   // P(i and j present); symmetric, diagonal fixed at 1
  Matrix prototypes;              // classes x feature dimension
  double noise = 0.0;

  std::size_t num_classes() const noexcept { return marginals.size(); }
  std::size_t feature_dim() const noexcept { return prototypes.cols(); }
  // Throws ConfigError on out-of-range probabilities, asymmetry, infeasible pairs
  // or all-zero marginals.
  void validate() const;
};

// Parametric builder with realisable targets: the joint and marginals are the exact
// moments of a mixture of independent-label profiles. Classes are split contiguously
// over tasks. A "chain" profile activates the r-th class of every task (cross-task
// correlation), a "task" profile activates one whole task, and the background profile
// activates nothing in particular.
struct ChainSpecParams {
  std::size_t classes = 12;
  std::size_t tasks = 4;
  std::size_t feature_dim = 32;
  double chain_weight = 0.5;
  double task_weight = 0.2;
  double active_prob = 0.7;
  double background_prob = 0.06;
  double marginal_jitter = 0.2;
  double noise = 0.5;
  std::uint64_t seed = 1;
};

CooccurrenceSpec make_chain_spec(const ChainSpecParams& params);
// Contiguous, near-equal class blocks.
std::vector<std::vector<std::size_t>> contiguous_partition(std::size_t classes, std::size_t tasks);

// Pairwise maximum-entropy label model fitted to a CooccurrenceSpec, sampled exactly
// by enumeration of the label states and conditioned on a non-empty label set.
class LabelSampler {
 public:
  explicit LabelSampler(const CooccurrenceSpec& spec);

  std::vector<std::size_t> sample(Rng& rng) const;
  // Model probabilities (unconditioned on non-emptiness) after fitting.
  double fitted_marginal(std::size_t c) const;
  double fitted_joint(std::size_t i, std::size_t j) const;

 private:
  std::vector<std::size_t> free_;    // classes with marginal in (0, 1)
  std::vector<std::size_t> always_;  // marginal exactly 1
  std::vector<double> cdf_;          // over free-label states, empty state removed if needed
  std::vector<double> state_prob_;   // normalised over all free states
  std::size_t num_classes_ = 0;
};

Dataset generate_synthetic(const CooccurrenceSpec& spec, std::size_t n, std::uint64_t seed);
Dataset generate_synthetic(const CooccurrenceSpec& spec, const LabelSampler& sampler,
                           std::size_t n, std::uint64_t seed);

// Assigns every example to the index of one task. Specific-labelling examples (all
// labels inside one class set) go to that task first; mixed-labelling examples then go,
// in dataset order, to the eligible task with the fewest examples so far, ties to the
// lowest index. Throws DataError if a label belongs to no class set.
std::vector<std::size_t> assign_to_tasks(const Dataset& data,
                                         const std::vector<std::vector<std::size_t>>& partition);

class TaskStream {
 public:
  TaskStream() = default;
  TaskStream(Scenario scenario, std::vector<TaskSpec> tasks, std::vector<Dataset> train,
             std::vector<Dataset> test, std::vector<std::vector<std::size_t>> train_source,
             std::vector<std::vector<std::size_t>> test_source, std::size_t total_classes);

  Scenario scenario() const noexcept { return scenario_; }
  void set_scenario(Scenario s) noexcept { scenario_ = s; }
  std::size_t num_tasks() const noexcept { return tasks_.size(); }
  std::size_t total_classes() const noexcept { return total_classes_; }
  const TaskSpec& task(std::size_t t) const { return tasks_.at(t); }
  const std::vector<TaskSpec>& tasks() const noexcept { return tasks_; }
  const Dataset& train(std::size_t t) const { return train_.at(t); }
  const Dataset& test(std::size_t t) const { return test_.at(t); }
  // Index in the source dataset for each train/test example.
  const std::vector<std::size_t>& train_source(std::size_t t) const { return train_source_.at(t); }
  const std::vector<std::size_t>& test_source(std::size_t t) const { return test_source_.at(t); }

  // C_seen^t in column order: the class sets of tasks 0..t concatenated.
  std::vector<std::size_t> seen_classes(std::size_t t) const;
  // |C_seen^{t-1}|: the number of classes before task t.
  std::size_t num_old(std::size_t t) const;
  std::size_t num_seen(std::size_t t) const { return num_old(t) + tasks_.at(t).classes.size(); }

 private:
  Scenario scenario_ = Scenario::CL;
  std::vector<TaskSpec> tasks_;
  std::vector<Dataset> train_, test_;
  std::vector<std::vector<std::size_t>> train_source_, test_source_;
  std::size_t total_classes_ = 0;
};

// Partitions the dataset into tasks with assign_to_tasks, then splits each task's
// examples into train/test with a seeded shuffle.
TaskStream split_into_tasks(const Dataset& data,
                            const std::vector<std::vector<std::size_t>>& partition,
                            Scenario scenario, double train_fraction, std::uint64_t seed);

// Training targets for an example at task t: IL covers C^t only, CL covers C_seen^t.
std::vector<double> project_labels(const LabeledExample& ex, const TaskStream& stream,
                                   std::size_t t, Scenario scenario);
// Test ground truth always covers C_seen^t.
std::vector<double> project_test_labels(const LabeledExample& ex, const TaskStream& stream,
                                        std::size_t t);

// Stacks features / projected targets of examples into matrices.
Matrix feature_matrix(const Dataset& data, std::span<const std::size_t> rows);
Matrix feature_matrix(const Dataset& data);

// ---- files ----

void save_dataset(const std::filesystem::path& path, const Dataset& data);
// Throws ParseError (with line number) on malformed lines or inconsistent feature width,
// DataError on an empty label field or duplicate labels.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& text);
std::string format_dataset(const Dataset& data);

struct StreamManifest {
  Scenario scenario = Scenario::CL;
  std::vector<std::vector<std::size_t>> partition;
  std::size_t total_classes = 0;
  std::size_t feature_dim = 0;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.7;
  std::vector<std::size_t> train_counts;
  std::vector<std::size_t> test_counts;
};

StreamManifest make_manifest(const TaskStream& stream, std::size_t feature_dim,
                             std::uint64_t split_seed, double train_fraction);
void save_manifest(const std::filesystem::path& path, const StreamManifest& manifest);
StreamManifest load_manifest(const std::filesystem::path& path);
// Rebuilds the stream and checks per-task counts against the manifest (DataError).
TaskStream stream_from_manifest(const Dataset& data, const StreamManifest& manifest);

}  // namespace mlcl
