#pragma once

#include <string>

#include "mlcl/matrix.hpp"
#include "mlcl/stream.hpp"
#include "mlcl/tape.hpp"

namespace mlcl {

struct LossWeights {
  double cls = 1.0;
  double dst = 0.0;
  double gph = 0.0;

  // ConfigError on a negative or non-finite weight, or cls == 0.
  void validate() const;
};

enum class Benchmark { SplitWide, SplitCoco };

// Published weights per benchmark and scenario.
LossWeights preset_weights(Benchmark benchmark, Scenario scenario);

// Summed BCE over probs[:, col_begin .. col_begin + targets.cols()), mean over the batch.
Var cls_loss(Var probs, const Matrix& targets, std::size_t col_begin);
// BCE with soft targets over the first soft.cols() columns.
Var dst_loss(Var probs, const Matrix& soft);
// Squared error between the first target.cols() graph outputs and the expert's.
Var gph_loss(Var gph, const Matrix& target);

struct LossParts {
  Var cls;
  Var dst;  // invalid at the first task
  Var gph;  // invalid at the first task or without a graph branch
};

// λ1 cls + λ2 dst + λ3 gph. Terms that are absent or weighted 0 are left out of the graph.
Var total_loss(const LossWeights& weights, const LossParts& parts);

}  // namespace mlcl
