#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlcl/matrix.hpp"
#include "mlcl/tape.hpp"

namespace mlcl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-4;
};

// Adam with bias correction. Moments are kept per parameter name. Rows appended to a
// parameter after it was first seen (class expansion) start with zero moments and
// their own bias-correction step count.
class AdamState {
 public:
  struct Slot {
    Matrix m;
    Matrix v;
    std::vector<std::int64_t> row_steps;
  };

  explicit AdamState(AdamConfig config = {});

  // One update over all (parameter, gradient) pairs; increments step().
  void step(std::span<const std::pair<Parameter*, const Matrix*>> updates);
  void step(Parameter& param, const Matrix& grad);

  std::int64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }
  const Slot* slot(const std::string& name) const;

 private:
  Slot& slot_for(const Parameter& param);

  AdamConfig config_;
  std::int64_t t_ = 0;
  std::map<std::string, Slot> slots_;
};

}  // namespace mlcl
