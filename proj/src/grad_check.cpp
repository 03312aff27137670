#include "mlcl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace mlcl {

bool GradCheckReport::passed() const {
  return std::all_of(parameters.begin(), parameters.end(),
                     [](const ParameterCheck& p) { return p.passed; });
}

std::string GradCheckReport::to_table() const {
  std::string out = "parameter,entries,max_rel_error,max_abs_error,status\n";
  char buf[256];
  for (const auto& p : parameters) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.3e,%.3e,%s\n", p.name.c_str(), p.entries,
                  p.max_relative_error, p.max_absolute_error, p.passed ? "pass" : "FAIL");
    out += buf;
  }
  return out;
}

namespace {

double evaluate(const Objective& objective) {
  Tape tape;
  return objective(tape).value()(0, 0);
}

}  // namespace

GradCheckReport grad_check(std::span<Parameter* const> params, const Objective& objective,
                           const GradCheckOptions& options) {
  std::map<const Parameter*, Matrix> analytic;
  {
    Tape tape;
    Var root = objective(tape);
    tape.backward(root);
    for (auto& [param, var] : tape.bound_parameters()) analytic[param] = var.grad();
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (Parameter* param : params) {
    ParameterCheck check;
    check.name = param->name;
    check.entries = param->value.size();
    Matrix grad = analytic.count(param) ? analytic[param]
                                        : Matrix(param->value.rows(), param->value.cols());
    grad *= options.analytic_scale;
    for (std::size_t i = 0; i < param->value.size(); ++i) {
      const double original = param->value[i];
      param->value[i] = original + options.step;
      const double plus = evaluate(objective);
      param->value[i] = original - options.step;
      const double minus = evaluate(objective);
      param->value[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double abs_err = std::abs(numeric - grad[i]);
      const double denom =
          std::max({std::abs(numeric), std::abs(grad[i]), options.magnitude_floor});
      check.max_absolute_error = std::max(check.max_absolute_error, abs_err);
      check.max_relative_error = std::max(check.max_relative_error, abs_err / denom);
    }
    check.passed = check.max_relative_error < options.tolerance;
    report.parameters.push_back(std::move(check));
  }
  return report;
}

}  // namespace mlcl
