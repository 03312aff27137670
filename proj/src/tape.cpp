#include "mlcl/tape.hpp"

#include "mlcl/errors.hpp"

namespace mlcl {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return Var(this, it->second);
  nodes_.push_back(Node{"parameter", param.value, {}, {}, {}, true, &param});
  bound_.emplace(&param, nodes_.size() - 1);
  bind_order_.push_back(&param);
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{"variable", std::move(value), {}, {}, {}, true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view kind, Matrix value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw ContractError("Tape::record: input precedes no node");
    needs = needs || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{kind, std::move(value), {}, std::move(inputs),
                        needs ? std::move(backward) : BackwardFn{}, needs, nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw ContractError("backward: root belongs to another tape");
  const Matrix& rv = nodes_[root.id_].value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw ContractError("backward: root must be scalar, got " + rv.shape_string());
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) {
      n.grad = Matrix(n.value.rows(), n.value.cols());
    } else {
      n.grad = Matrix();
    }
  }
  if (!nodes_[root.id_].requires_grad) {
    backward_done_ = true;
    return;
  }
  nodes_[root.id_].grad(0, 0) = 1.0;
  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.backward) n.backward(*this, id);
  }
  backward_done_ = true;
}

std::vector<std::pair<Parameter*, Var>> Tape::bound_parameters() {
  std::vector<std::pair<Parameter*, Var>> out;
  out.reserve(bind_order_.size());
  for (const Parameter* p : bind_order_) {
    const std::size_t id = bound_.at(p);
    out.emplace_back(nodes_[id].param, Var(this, id));
  }
  return out;
}

}  // namespace mlcl
