#pragma once

#include <cstddef>

#include "mlcl/matrix.hpp"
#include "mlcl/tape.hpp"

// Differentiable operations recorded on a Tape. All operands must live on the same tape.
namespace mlcl::ad {

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);

// x (n x m) + bias broadcast over rows; bias is 1 x m.
Var add_row_bias(Var x, Var bias);
// x (n x m) + bias^T broadcast over rows; bias is m x 1 (one entry per output column).
Var add_col_bias(Var x, Var bias);

Var sigmoid(Var a);
Var leaky_relu(Var a, double negative_slope);

Var sum(Var a);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, std::size_t rows, std::size_t cols);

// x holds `blocks` stacked row blocks, each adjacency.rows() tall; returns adjacency * x_b
// for every block. The adjacency is a constant.
Var block_propagate(const Matrix& adjacency, Var x);

// Graph nodes for a batch. Row (b, i) of the result, at index b * C + i, is
// theta_i (.) prior_b for i < prior_rows and theta_i (.) current_b otherwise.
// `prior` is a constant (B x D), ignored when prior_rows == 0.
Var class_nodes(Var theta, Var current, const Matrix& prior, std::size_t prior_rows);

// Mean over rows of the summed binary cross-entropy between probabilities
// probs[:, col_begin .. col_begin + targets.cols()) and targets. Probabilities are
// clamped to [kProbClamp, 1 - kProbClamp] before taking logarithms.
Var bce(Var probs, const Matrix& targets, std::size_t col_begin);

// Mean over rows of sum_c (target - pred[:, col_begin + c])^2. No gradient into targets.
Var squared_error(Var pred, const Matrix& targets, std::size_t col_begin);

inline constexpr double kProbClamp = 1e-12;

}  // namespace mlcl::ad
