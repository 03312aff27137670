#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mlcl/acm.hpp"
#include "mlcl/adam.hpp"
#include "mlcl/losses.hpp"
#include "mlcl/metrics.hpp"
#include "mlcl/model.hpp"
#include "mlcl/stream.hpp"

namespace mlcl {

enum class TrainerMode { AgcnPlusPlus, AgcnClassic, FineTuning, MultiTask };
std::string to_string(TrainerMode mode);
TrainerMode parse_trainer_mode(const std::string& text);

// Trained: the snapshot of the previous task. Random: a random-weights model of the
// same shape stands in for it (soft labels, graph targets and old-class node features).
enum class ExpertKind { Trained, Random };

struct RunConfig {
  Scenario scenario = Scenario::IL;
  TrainerMode mode = TrainerMode::AgcnPlusPlus;
  LossWeights weights{0.5, 0.5, 0.1};
  AdamConfig adam{1e-2};
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  // input_dim is taken from the stream, graph is implied by the mode and the seed is
  // derived from `seed`.
  ModelConfig model{32, 16, 24, 32};
  bool disable_rq = false;
  bool disable_gph = false;
  bool disable_dst = false;
  ExpertKind expert = ExpertKind::Trained;
  NormalizeOptions normalize{};
  double threshold = 0.5;
  std::size_t threads = 1;

  void validate() const;
  LossWeights effective_weights() const;
};

// What one training batch fed to each loss term.
struct BatchTrace {
  std::size_t task = 0;
  std::vector<std::size_t> examples;     // positions in stream.train(task)
  std::vector<std::size_t> cls_classes;  // global class ids of the classification targets
  Matrix cls_targets;
  std::vector<std::size_t> dst_classes;  // empty when the term is absent
  Matrix dst_targets;
  bool gph_term = false;
  std::uint64_t expert_checksum = 0;     // 0 without an expert
  double loss = 0;
};

struct RunHooks {
  std::function<void(const BatchTrace&)> on_batch;
  // After every task, with everything needed to resume or inspect the run.
  std::function<void(const Checkpoint&)> on_task_end;
};

struct TaskEvaluation {
  std::size_t after_task = 0;
  std::vector<MetricReport> splits;  // test set j over its own classes, j <= after_task
  MetricReport all;                  // union of seen test sets over every seen class
};

struct ForgettingSummary {
  std::string metric;
  ForgettingReport report;
};

struct RunRecord {
  TrainerMode mode = TrainerMode::AgcnPlusPlus;
  Scenario scenario = Scenario::IL;
  std::vector<TaskEvaluation> evaluations;
  HistoryMatrix map_history, cf1_history, of1_history;
  std::vector<ACMatrix> acms;
  std::vector<std::uint64_t> expert_checksums;  // per task, 0 when there was no expert
  std::vector<ForgettingSummary> forgetting;    // after the last task, if T >= 2

  double final_map() const;
  std::optional<double> map_forgetting() const;
};

// One task of the continual loop; exposed for tests. `expert` is null at the first task.
// Returns A^t (empty without a graph branch).
ACMatrix train_task(ModelState& model, const ExpertSnapshot* expert, const ACMatrix* prev_acm,
                    const TaskStream& stream, std::size_t t, const RunConfig& config,
                    AdamState& adam, const RunHooks& hooks = {});

// Algorithm loop over all tasks for AgcnPlusPlus, AgcnClassic and FineTuning.
RunRecord run_continual(const TaskStream& stream, const RunConfig& config, const RunHooks& hooks = {});
RunRecord run_finetuning(const TaskStream& stream, RunConfig config, const RunHooks& hooks = {});
// One shuffled epoch over every task's training data with complete labels; a single
// evaluation on the union of test sets.
RunRecord run_multitask(const TaskStream& stream, RunConfig config, const RunHooks& hooks = {});
// Dispatches on config.mode.
RunRecord run(const TaskStream& stream, const RunConfig& config, const RunHooks& hooks = {});

// Scores for a dataset in fixed chunks, optionally on several threads; identical for any
// thread count.
Matrix predict_dataset(const ModelState& model, const ExpertSnapshot* expert, const Matrix& a_hat,
                       const Dataset& data, std::size_t threads);

// Threads for evaluation: MLCL_THREADS if set (>= 1), else the hardware count, capped by `cap`.
std::size_t evaluation_threads(std::size_t cap);

// ---- reports ----

std::string format_metrics_csv(const RunRecord& record);
std::string format_forgetting_csv(const RunRecord& record);
std::string format_curve_csv(const RunRecord& record);
// metrics.csv, forgetting.csv, curve.csv and acm_task<k>.csv in `dir`.
void write_run_outputs(const std::filesystem::path& dir, const RunRecord& record);

}  // namespace mlcl
