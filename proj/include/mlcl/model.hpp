#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mlcl/acm.hpp"
#include "mlcl/matrix.hpp"
#include "mlcl/tape.hpp"

namespace mlcl {

// Dynamic: image-conditioned graph nodes from the partial label encoder.
// Static: learned per-class embeddings as nodes, scores by dot product with the feature.
// None: backbone and fc only.
enum class GraphMode { Dynamic, Static, None };
std::string to_string(GraphMode mode);
GraphMode parse_graph_mode(const std::string& text);

struct ModelConfig {
  std::size_t input_dim = 32;
  std::size_t feature_dim = 64;   // D
  std::size_t hidden_dim = 96;    // d1
  std::size_t graph_dim = 128;    // d2
  std::size_t backbone_layers = 1;  // 0 = identity (input_dim must equal D)
  double negative_slope = 0.2;
  GraphMode graph = GraphMode::Dynamic;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Backbone {
  std::vector<Parameter> weights;  // in x D
  std::vector<Parameter> biases;   // 1 x D
  double negative_slope = 0.2;

  std::size_t layers() const noexcept { return weights.size(); }
};

struct ModelStateAccess;

class ModelState {
 public:
  ModelState() = default;
  static ModelState create(const ModelConfig& config, std::size_t first_task_classes);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t num_classes() const noexcept { return classes_; }
  // Classes that existed before the current task; their graph nodes come from the expert.
  std::size_t old_classes() const noexcept { return old_classes_; }
  std::size_t task() const noexcept { return task_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  Backbone backbone;
  Parameter fc_w;       // C x D
  Parameter fc_b;       // C x 1
  Parameter theta;      // C x D
  Parameter w1;         // D x d1
  Parameter w2;         // d1 x d2 (d1 x D in static mode)
  Parameter readout_w;  // d2 x 1, shared by all nodes
  Parameter readout_b;  // 1 x 1
  Parameter embedding;  // C x D, static mode

 private:
  friend void expand_for_task(ModelState&, std::size_t, std::size_t);
  friend struct ModelStateAccess;
  ModelConfig config_;
  std::size_t classes_ = 0;
  std::size_t old_classes_ = 0;
  std::size_t task_ = 0;
};

// Grows fc, Θ and the embedding table by `new_classes` rows for task `task`, which must
// be exactly one past the current task (StateError otherwise). Existing values are kept
// bit-exact; new rows are Kaiming-uniform from a seed derived from the model seed.
void expand_for_task(ModelState& state, std::size_t task, std::size_t new_classes);

// ---- differentiable pieces ----

// x: B x input_dim. Throws ContractError on non-finite input, DimensionError on width.
Var backbone_forward(Tape& tape, const Backbone& backbone, Var x, bool trainable);
Matrix backbone_forward(const Backbone& backbone, const Matrix& x);

struct PleOutput {
  Var cal;    // B x C, pre-sigmoid
  Var nodes;  // (B*C) x D, row b*C + i is node i of example b
};

// `prior` holds the expert backbone features (B x D) for the first old_classes() nodes.
// Throws StateError if the model has old classes and prior is empty.
PleOutput ple_forward(Tape& tape, ModelState& state, Var features, const Matrix& prior,
                      bool trainable);

// Two propagation layers over Â and the shared readout: returns B x C pre-sigmoid scores.
Var gcn_forward(Tape& tape, ModelState& state, const Matrix& a_hat, Var nodes, bool trainable);

// Static-node scores Z2 * feature for every class: B x C. StateError unless static mode.
Var static_node_forward(Tape& tape, ModelState& state, const Matrix& a_hat, Var features,
                        bool trainable);

// σ(cal + gph) elementwise.
Matrix predict(const Matrix& cal, const Matrix& gph);

struct ForwardVars {
  Var features;
  Var cal;
  Var gph;  // invalid in GraphMode::None
  Var logits;
  Var probs;
};

// Full forward pass for a batch. The const overload records parameters as constants.
ForwardVars model_forward(Tape& tape, ModelState& state, const Matrix& x, const Matrix& a_hat,
                          const Matrix& prior, bool trainable = true);
ForwardVars model_forward(Tape& tape, const ModelState& state, const Matrix& x,
                          const Matrix& a_hat, const Matrix& prior);

struct Prediction {
  Matrix probs;  // B x C
  Matrix gph;    // B x C pre-sigmoid (empty in GraphMode::None)
};

// Frozen copy of the model after a task, with whatever it needs to reproduce its own
// predictions: the backbone that fed its old-class nodes and its ACM.
class ExpertSnapshot {
 public:
  ExpertSnapshot() = default;
  ExpertSnapshot(ModelState model, std::optional<Backbone> prior_backbone, ACMatrix acm,
                 NormalizeOptions normalize = {});

  const ModelState& model() const noexcept { return model_; }
  const std::optional<Backbone>& prior_backbone() const noexcept { return prior_backbone_; }
  const ACMatrix& acm() const noexcept { return acm_; }
  const Matrix& a_hat() const noexcept { return a_hat_; }
  const NormalizeOptions& normalize() const noexcept { return normalize_; }
  std::size_t num_classes() const noexcept { return model_.num_classes(); }
  std::uint64_t checksum() const noexcept { return checksum_; }

  // Features of the frozen backbone: the prior for the next model's old-class nodes.
  Matrix features(const Matrix& x) const;
  // ẑ (post-sigmoid) and y'_gph (pre-sigmoid) over the snapshot's classes.
  Prediction forward(const Matrix& x) const;

 private:
  ModelState model_;
  std::optional<Backbone> prior_backbone_;
  ACMatrix acm_;
  Matrix a_hat_;
  NormalizeOptions normalize_;
  std::uint64_t checksum_ = 0;
};

// Test-time predictions of `state`, whose old-class nodes come from `expert` (null at the
// first task or without a graph branch).
Prediction predict_batch(const ModelState& state, const ExpertSnapshot* expert,
                         const Matrix& a_hat, const Matrix& x);

// Random-weights replacement with the same shapes, for ablations.
ExpertSnapshot random_expert_like(const ExpertSnapshot& expert, std::uint64_t seed);

std::uint64_t checksum(const ModelState& state);
std::uint64_t checksum(const Backbone& backbone);

// ---- checkpoints ----

struct Checkpoint {
  ModelState model;
  std::optional<ExpertSnapshot> expert;
  std::optional<ACMatrix> acm;  // the ACM of the last completed task
  std::vector<std::size_t> classes;  // global class ids in column order
  std::size_t task = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string format_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& text);

}  // namespace mlcl
