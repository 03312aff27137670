#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mlcl/matrix.hpp"

namespace mlcl {

// A named trainable matrix owned by a model.
struct Parameter {
  std::string name;
  Matrix value;
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode differentiation tape. Nodes are appended in evaluation order, so
// the node sequence is always a topological order. One tape per mini-batch.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Trainable leaf bound to `param`. Binding the same parameter twice yields the same node.
  Var parameter(Parameter& param);
  // Leaf that receives a gradient without being a model parameter.
  Var variable(Matrix value);

  // Records an operation node. `backward` runs only when the node requires a gradient
  // and must accumulate into the gradients of those inputs that require one.
  Var record(std::string_view kind, Matrix value, std::vector<std::size_t> inputs,
             BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and propagates. Root must be 1x1.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view kind(std::size_t id) const { return nodes_[id].kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer; zero-filled before backward() runs.
  Matrix& grad(std::size_t id) { return nodes_[id].grad; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool has_run_backward() const noexcept { return backward_done_; }

  // Parameters bound on this tape, in binding order, with their nodes.
  std::vector<std::pair<Parameter*, Var>> bound_parameters();

  Var var(std::size_t id) { return Var(this, id); }

 private:
  struct Node {
    std::string_view kind;
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
  std::vector<const Parameter*> bind_order_;
  bool backward_done_ = false;
};

}  // namespace mlcl
