#include "mlcl/losses.hpp"

#include <cmath>

#include "mlcl/errors.hpp"
#include "mlcl/ops.hpp"

namespace mlcl {

void LossWeights::validate() const {
  for (double w : {cls, dst, gph}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (cls == 0.0) throw ConfigError("the classification weight must be > 0");
}

LossWeights preset_weights(Benchmark benchmark, Scenario scenario) {
  if (benchmark == Benchmark::SplitWide) {
    return scenario == Scenario::IL ? LossWeights{0.10, 0.90, 1e4} : LossWeights{0.70, 0.30, 1e3};
  }
  return scenario == Scenario::IL ? LossWeights{0.15, 0.85, 1e4} : LossWeights{0.40, 0.60, 1e4};
}

Var cls_loss(Var probs, const Matrix& targets, std::size_t col_begin) {
  return ad::bce(probs, targets, col_begin);
}

Var dst_loss(Var probs, const Matrix& soft) { return ad::bce(probs, soft, 0); }

Var gph_loss(Var gph, const Matrix& target) { return ad::squared_error(gph, target, 0); }

Var total_loss(const LossWeights& w, const LossParts& parts) {
  w.validate();
  if (!parts.cls.valid()) throw ContractError("total_loss needs the classification term");
  Var total = w.cls == 1.0 ? parts.cls : ad::scale(parts.cls, w.cls);
  if (parts.dst.valid() && w.dst != 0.0) total = ad::add(total, ad::scale(parts.dst, w.dst));
  if (parts.gph.valid() && w.gph != 0.0) total = ad::add(total, ad::scale(parts.gph, w.gph));
  return total;
}

}  // namespace mlcl
