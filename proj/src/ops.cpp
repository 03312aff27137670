#include "mlcl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mlcl/errors.hpp"

namespace mlcl::ad {

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError(std::string(op) + ": operands on different tapes");
  }
  return a.tape();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  Matrix out = mlcl::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) matmul_nt_acc(g, tp.value(ib), tp.grad(ia));
    if (tp.requires_grad(ib)) matmul_tn_acc(tp.value(ia), g, tp.grad(ib));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul_nt");
  Matrix out = mlcl::matmul_nt(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("matmul_nt", std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) matmul_acc(g, tp.value(ib), tp.grad(ia));
    if (tp.requires_grad(ib)) matmul_tn_acc(g, tp.value(ia), tp.grad(ib));
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value() + b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("add", std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    if (tp.requires_grad(ia)) tp.grad(ia) += tp.grad(self);
    if (tp.requires_grad(ib)) tp.grad(ib) += tp.grad(self);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value() - b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("sub", std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    if (tp.requires_grad(ia)) tp.grad(ia) += tp.grad(self);
    if (tp.requires_grad(ib)) tp.grad(ib) -= tp.grad(self);
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = same_tape(a, b, "hadamard");
  Matrix out = mlcl::hadamard(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("hadamard", std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Matrix& ga = tp.grad(ia);
      const Matrix& vb = tp.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (tp.requires_grad(ib)) {
      Matrix& gb = tp.grad(ib);
      const Matrix& va = tp.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  const std::size_t ia = a.id();
  return a.tape().record("scale", std::move(out), {ia}, [ia, s](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_row_bias(Var x, Var bias) {
  Tape& t = same_tape(x, bias, "add_row_bias");
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_row_bias: bias " + bv.shape_string() + " for input " +
                         xv.shape_string());
  }
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
  }
  const std::size_t ix = x.id(), ib = bias.id();
  return t.record("add_row_bias", std::move(out), {ix, ib}, [ix, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ix)) tp.grad(ix) += g;
    if (tp.requires_grad(ib)) {
      Matrix& gb = tp.grad(ib);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
      }
    }
  });
}

Var add_col_bias(Var x, Var bias) {
  Tape& t = same_tape(x, bias, "add_col_bias");
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  if (bv.cols() != 1 || bv.rows() != xv.cols()) {
    throw DimensionError("add_col_bias: bias " + bv.shape_string() + " for input " +
                         xv.shape_string());
  }
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(c, 0);
  }
  const std::size_t ix = x.id(), ib = bias.id();
  return t.record("add_col_bias", std::move(out), {ix, ib}, [ix, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ix)) tp.grad(ix) += g;
    if (tp.requires_grad(ib)) {
      Matrix& gb = tp.grad(ib);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) gb(c, 0) += g(r, c);
      }
    }
  });
}

Var sigmoid(Var a) {
  Matrix out = a.value();
  for (double& v : out.data()) v = sigmoid_scalar(v);
  const std::size_t ia = a.id();
  return a.tape().record("sigmoid", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var leaky_relu(Var a, double negative_slope) {
  Matrix out = a.value();
  for (double& v : out.data()) {
    if (v < 0) v *= negative_slope;
  }
  const std::size_t ia = a.id();
  return a.tape().record("leaky_relu", std::move(out), {ia},
                         [ia, negative_slope](Tape& tp, std::size_t self) {
                           const Matrix& g = tp.grad(self);
                           const Matrix& x = tp.value(ia);
                           Matrix& ga = tp.grad(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             ga[i] += x[i] < 0 ? negative_slope * g[i] : g[i];
                           }
                         });
}

Var sum(Var a) {
  Matrix out(1, 1, mlcl::sum(a.value()));
  const std::size_t ia = a.id();
  return a.tape().record("sum", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)(0, 0);
    for (double& v : tp.grad(ia).data()) v += g;
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Matrix out = a.value().slice_cols(begin, end);
  const std::size_t ia = a.id();
  return a.tape().record("slice_cols", std::move(out), {ia},
                         [ia, begin](Tape& tp, std::size_t self) {
                           const Matrix& g = tp.grad(self);
                           Matrix& ga = tp.grad(ia);
                           for (std::size_t r = 0; r < g.rows(); ++r) {
                             for (std::size_t c = 0; c < g.cols(); ++c) ga(r, begin + c) += g(r, c);
                           }
                         });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const Matrix& av = a.value();
  if (rows * cols != av.size()) {
    throw DimensionError("reshape: " + av.shape_string() + " to " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  Matrix out(rows, cols, av.values());
  const std::size_t ia = a.id();
  return a.tape().record("reshape", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var block_propagate(const Matrix& adjacency, Var x) {
  const std::size_t n = adjacency.rows();
  if (adjacency.cols() != n) {
    throw DimensionError("block_propagate: adjacency " + adjacency.shape_string() + " not square");
  }
  const Matrix& xv = x.value();
  if (n == 0 || xv.rows() % n != 0) {
    throw DimensionError("block_propagate: " + xv.shape_string() + " is not a stack of " +
                         std::to_string(n) + "-row blocks");
  }
  const std::size_t blocks = xv.rows() / n, k = xv.cols();
  Matrix out(xv.rows(), k);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      double* orow = &out(b * n + i, 0);
      for (std::size_t j = 0; j < n; ++j) {
        const double w = adjacency(i, j);
        if (w == 0.0) continue;
        const double* xrow = &xv(b * n + j, 0);
        for (std::size_t c = 0; c < k; ++c) orow[c] += w * xrow[c];
      }
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record(
      "block_propagate", std::move(out), {ix},
      [ix, adjacency, n, blocks, k](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        Matrix& gx = tp.grad(ix);
        for (std::size_t b = 0; b < blocks; ++b) {
          for (std::size_t i = 0; i < n; ++i) {
            const double* grow = &g(b * n + i, 0);
            for (std::size_t j = 0; j < n; ++j) {
              const double w = adjacency(i, j);
              if (w == 0.0) continue;
              double* xrow = &gx(b * n + j, 0);
              for (std::size_t c = 0; c < k; ++c) xrow[c] += w * grow[c];
            }
          }
        }
      });
}

Var class_nodes(Var theta, Var current, const Matrix& prior, std::size_t prior_rows) {
  Tape& t = same_tape(theta, current, "class_nodes");
  const Matrix& tv = theta.value();
  const Matrix& cv = current.value();
  const std::size_t classes = tv.rows(), dim = tv.cols(), batch = cv.rows();
  if (cv.cols() != dim) {
    throw DimensionError("class_nodes: theta " + tv.shape_string() + " vs features " +
                         cv.shape_string());
  }
  if (prior_rows > classes) {
    throw DimensionError("class_nodes: " + std::to_string(prior_rows) + " prior rows for " +
                         std::to_string(classes) + " classes");
  }
  if (prior_rows > 0 && (prior.rows() != batch || prior.cols() != dim)) {
    throw DimensionError("class_nodes: prior features " + prior.shape_string() +
                         " vs current " + cv.shape_string());
  }
  Matrix out(batch * classes, dim);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < classes; ++i) {
      const double* src = i < prior_rows ? &prior(b, 0) : &cv(b, 0);
      const double* th = &tv(i, 0);
      double* o = &out(b * classes + i, 0);
      for (std::size_t c = 0; c < dim; ++c) o[c] = th[c] * src[c];
    }
  }
  const std::size_t it = theta.id(), ic = current.id();
  Matrix prior_copy = prior_rows > 0 ? prior : Matrix();
  return t.record(
      "class_nodes", std::move(out), {it, ic},
      [it, ic, prior_copy = std::move(prior_copy), prior_rows, classes, dim, batch](
          Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        const Matrix& tv = tp.value(it);
        const Matrix& cv = tp.value(ic);
        const bool need_t = tp.requires_grad(it), need_c = tp.requires_grad(ic);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < classes; ++i) {
            const bool from_prior = i < prior_rows;
            const double* src = from_prior ? &prior_copy(b, 0) : &cv(b, 0);
            const double* grow = &g(b * classes + i, 0);
            if (need_t) {
              double* gt = &tp.grad(it)(i, 0);
              for (std::size_t c = 0; c < dim; ++c) gt[c] += grow[c] * src[c];
            }
            if (need_c && !from_prior) {
              const double* th = &tv(i, 0);
              double* gc = &tp.grad(ic)(b, 0);
              for (std::size_t c = 0; c < dim; ++c) gc[c] += grow[c] * th[c];
            }
          }
        }
      });
}

Var bce(Var probs, const Matrix& targets, std::size_t col_begin) {
  const Matrix& p = probs.value();
  if (targets.rows() != p.rows() || col_begin + targets.cols() > p.cols()) {
    throw DimensionError("bce: targets " + targets.shape_string() + " at column " +
                         std::to_string(col_begin) + " for predictions " + p.shape_string());
  }
  const std::size_t n = p.rows();
  if (n == 0) throw ContractError("bce: empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < targets.cols(); ++c) {
      const double q = std::clamp(p(r, col_begin + c), kProbClamp, 1.0 - kProbClamp);
      const double y = targets(r, c);
      total -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
    }
  }
  const std::size_t ip = probs.id();
  return probs.tape().record(
      "bce", Matrix(1, 1, total / static_cast<double>(n)), {ip},
      [ip, targets, col_begin, n](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)(0, 0) / static_cast<double>(n);
        const Matrix& p = tp.value(ip);
        Matrix& gp = tp.grad(ip);
        for (std::size_t r = 0; r < targets.rows(); ++r) {
          for (std::size_t c = 0; c < targets.cols(); ++c) {
            const double raw = p(r, col_begin + c);
            if (raw < kProbClamp || raw > 1.0 - kProbClamp) continue;
            const double y = targets(r, c);
            gp(r, col_begin + c) -= g * (y / raw - (1.0 - y) / (1.0 - raw));
          }
        }
      });
}

Var squared_error(Var pred, const Matrix& targets, std::size_t col_begin) {
  const Matrix& p = pred.value();
  if (targets.rows() != p.rows() || col_begin + targets.cols() > p.cols()) {
    throw DimensionError("squared_error: targets " + targets.shape_string() + " at column " +
                         std::to_string(col_begin) + " for predictions " + p.shape_string());
  }
  const std::size_t n = p.rows();
  if (n == 0) throw ContractError("squared_error: empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < targets.cols(); ++c) {
      const double d = targets(r, c) - p(r, col_begin + c);
      total += d * d;
    }
  }
  const std::size_t ip = pred.id();
  return pred.tape().record(
      "squared_error", Matrix(1, 1, total / static_cast<double>(n)), {ip},
      [ip, targets, col_begin, n](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)(0, 0) / static_cast<double>(n);
        const Matrix& p = tp.value(ip);
        Matrix& gp = tp.grad(ip);
        for (std::size_t r = 0; r < targets.rows(); ++r) {
          for (std::size_t c = 0; c < targets.cols(); ++c) {
            gp(r, col_begin + c) += 2.0 * g * (p(r, col_begin + c) - targets(r, c));
          }
        }
      });
}

}  // namespace mlcl::ad
