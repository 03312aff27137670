#include "mlcl/adam.hpp"

#include <cmath>

#include "mlcl/errors.hpp"

namespace mlcl {

AdamState::AdamState(AdamConfig config) : config_(config) {
  if (!(config_.lr > 0) || !(config_.epsilon > 0) || config_.beta1 < 0 || config_.beta1 >= 1 ||
      config_.beta2 < 0 || config_.beta2 >= 1) {
    throw ConfigError("Adam: lr and epsilon must be positive, betas in [0, 1)");
  }
}

const AdamState::Slot* AdamState::slot(const std::string& name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? nullptr : &it->second;
}

AdamState::Slot& AdamState::slot_for(const Parameter& param) {
  const Matrix& p = param.value;
  auto [it, inserted] = slots_.try_emplace(param.name);
  Slot& s = it->second;
  if (inserted) {
    s.m = Matrix(p.rows(), p.cols());
    s.v = Matrix(p.rows(), p.cols());
    s.row_steps.assign(p.rows(), 0);
    return s;
  }
  if (s.m.cols() != p.cols() || s.m.rows() > p.rows()) {
    throw DimensionError("Adam: parameter '" + param.name + "' changed shape from " +
                         s.m.shape_string() + " to " + p.shape_string());
  }
  if (s.m.rows() < p.rows()) {
    const Matrix fresh(p.rows() - s.m.rows(), p.cols());
    s.m.append_rows(fresh);
    s.v.append_rows(fresh);
    s.row_steps.resize(p.rows(), 0);
  }
  return s;
}

void AdamState::step(std::span<const std::pair<Parameter*, const Matrix*>> updates) {
  for (const auto& [param, grad] : updates) {
    if (!param->value.same_shape(*grad)) {
      throw DimensionError("Adam: gradient " + grad->shape_string() + " for parameter '" +
                           param->name + "' of shape " + param->value.shape_string());
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (const auto& [param, grad] : updates) {
    Slot& s = slot_for(*param);
    Matrix& p = param->value;
    const std::size_t cols = p.cols();
    for (std::size_t r = 0; r < p.rows(); ++r) {
      const std::int64_t k = ++s.row_steps[r];
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(k));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(k));
      for (std::size_t c = 0; c < cols; ++c) {
        const double g = (*grad)(r, c);
        double& m = s.m(r, c);
        double& v = s.v(r, c);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        p(r, c) -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      }
    }
  }
}

void AdamState::step(Parameter& param, const Matrix& grad) {
  const std::pair<Parameter*, const Matrix*> one{&param, &grad};
  step(std::span<const std::pair<Parameter*, const Matrix*>>(&one, 1));
}

}  // namespace mlcl
