#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mlcl/tape.hpp"

namespace mlcl {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Entries whose analytic and numeric gradients are both below this magnitude are
  // compared in absolute terms against it instead of relatively.
  double magnitude_floor = 1e-7;
  // Multiplies the analytic gradient before comparison; 1.0 except for fault injection.
  double analytic_scale = 1.0;
};

struct ParameterCheck {
  std::string name;
  std::size_t entries = 0;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;
  double tolerance = 0.0;

  bool passed() const;
  std::string to_table() const;
};

// Builds the scalar objective on a fresh tape. Must bind the checked parameters with
// Tape::parameter so their analytic gradients are recorded.
using Objective = std::function<Var(Tape&)>;

// Compares analytic gradients with central differences for every entry of every
// parameter in `params`. Parameter values are restored before returning.
GradCheckReport grad_check(std::span<Parameter* const> params, const Objective& objective,
                           const GradCheckOptions& options = {});

}  // namespace mlcl
