#include "mlcl/acm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mlcl/errors.hpp"
#include "mlcl/kv.hpp"

namespace mlcl {

CoocCounters::CoocCounters(std::size_t old_classes, std::size_t new_classes)
    : m_(old_classes),
      n_(new_classes),
      pair_((old_classes + new_classes) * new_classes, 0),
      new_count_(new_classes, 0),
      old_count_(old_classes, 0),
      soft_sum_(old_classes, 0.0),
      soft_pair_(old_classes, new_classes) {}

namespace {

bool is_on(double v, std::size_t row, std::size_t col) {
  if (v == 1.0) return true;
  if (v == 0.0) return false;
  throw ContractError("label entry (" + std::to_string(row) + ", " + std::to_string(col) +
                      ") is not binary");
}

}  // namespace

void CoocCounters::update_hard(const Matrix& labels) {
  if (labels.rows() == 0) return;
  const bool full = labels.cols() == m_ + n_;
  if (!full && labels.cols() != n_) {
    throw DimensionError("hard labels are " + labels.shape_string() + ", expected width " +
                         std::to_string(n_) + " or " + std::to_string(m_ + n_));
  }
  const std::size_t offset = full ? 0 : m_;
  std::vector<std::size_t> on;
  for (std::size_t r = 0; r < labels.rows(); ++r) {
    on.clear();
    for (std::size_t c = 0; c < labels.cols(); ++c) {
      if (is_on(labels(r, c), r, c)) on.push_back(c + offset);
    }
    for (std::size_t a : on) {
      if (a < m_) {
        ++old_count_[a];
      } else {
        ++new_count_[a - m_];
      }
      for (std::size_t b : on) {
        if (b >= m_) ++pair_[a * n_ + (b - m_)];
      }
    }
    ++examples_;
  }
}

void CoocCounters::update_soft(const Matrix& soft, const Matrix& hard_new) {
  if (soft.rows() != hard_new.rows() || soft.cols() != m_ || hard_new.cols() != n_) {
    throw DimensionError("soft update: got " + soft.shape_string() + " and " +
                         hard_new.shape_string() + ", expected Bx" + std::to_string(m_) +
                         " and Bx" + std::to_string(n_));
  }
  for (std::size_t r = 0; r < soft.rows(); ++r) {
    for (std::size_t i = 0; i < m_; ++i) {
      const double z = soft(r, i);
      if (!(z >= 0.0 && z <= 1.0)) {
        throw ContractError("soft label " + format_double(z) + " outside [0, 1]");
      }
    }
    for (std::size_t i = 0; i < m_; ++i) {
      const double z = soft(r, i);
      soft_sum_[i] += z;
      for (std::size_t j = 0; j < n_; ++j) {
        if (is_on(hard_new(r, j), r, j)) soft_pair_(i, j) += z;
      }
    }
  }
}

void CoocCounters::merge(const CoocCounters& other) {
  if (other.m_ != m_ || other.n_ != n_) throw DimensionError("merging counters of different sizes");
  for (std::size_t k = 0; k < pair_.size(); ++k) pair_[k] += other.pair_[k];
  for (std::size_t j = 0; j < n_; ++j) new_count_[j] += other.new_count_[j];
  for (std::size_t i = 0; i < m_; ++i) {
    old_count_[i] += other.old_count_[i];
    soft_sum_[i] += other.soft_sum_[i];
  }
  soft_pair_ += other.soft_pair_;
  examples_ += other.examples_;
}

double clamped_ratio(double num, double den) {
  if (den == 0.0) return 0.0;
  return std::clamp(num / den, 0.0, 1.0);
}

AcmBlocks assemble_blocks(const CoocCounters& c, Scenario mode) {
  const std::size_t m = c.old_classes(), n = c.new_classes();
  AcmBlocks out{Matrix(n, n), Matrix(m, n), Matrix(n, m)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.B(i, j) = i == j ? 1.0
                           : clamped_ratio(static_cast<double>(c.pair(m + i, j)),
                                   static_cast<double>(c.new_count(j)));
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double nj = static_cast<double>(c.new_count(j));
      if (mode == Scenario::CL) {
        const double nij = static_cast<double>(c.pair(i, j));
        out.R(i, j) = clamped_ratio(nij, nj);
        out.Q(j, i) = clamped_ratio(nij, static_cast<double>(c.old_count(i)));
      } else {
        // R * N_j / S_i written without the round trip through R.
        out.R(i, j) = clamped_ratio(c.soft_pair(i, j), nj);
        out.Q(j, i) = clamped_ratio(c.soft_pair(i, j), c.soft_sum(i));
      }
    }
  }
  return out;
}

AcmBlocks without_inter_task(AcmBlocks blocks) {
  blocks.R.fill(0.0);
  blocks.Q.fill(0.0);
  return blocks;
}

ACMatrix augment(const ACMatrix* prev, const AcmBlocks& blocks, std::size_t task, Scenario mode) {
  const std::size_t m = prev ? prev->size() : 0;
  const std::size_t n = blocks.B.rows();
  auto expect = [](const Matrix& x, std::size_t r, std::size_t c, const char* name) {
    if (x.rows() != r || x.cols() != c) {
      throw DimensionError(std::string("ACM block ") + name + " is " + x.shape_string() +
                           ", expected " + std::to_string(r) + "x" + std::to_string(c));
    }
  };
  if (prev && prev->values.cols() != m) expect(prev->values, m, m, "A_prev");
  expect(blocks.B, n, n, "B");
  expect(blocks.R, m, n, "R");
  expect(blocks.Q, n, m, "Q");

  ACMatrix out;
  out.values = Matrix(m + n, m + n);
  out.boundary = m;
  out.task = task;
  out.mode = mode;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) out.values(r, c) = prev->values(r, c);
    for (std::size_t c = 0; c < n; ++c) out.values(r, m + c) = blocks.R(r, c);
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) out.values(m + r, c) = blocks.Q(r, c);
    for (std::size_t c = 0; c < n; ++c) out.values(m + r, m + c) = blocks.B(r, c);
  }
  return out;
}

Matrix normalize_for_gcn(const Matrix& a, const NormalizeOptions& options) {
  if (a.rows() != a.cols()) throw DimensionError("adjacency must be square, got " + a.shape_string());
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      double v = a(r, c);
      if (options.binarize_threshold && r != c) v = v >= *options.binarize_threshold ? 1.0 : 0.0;
      if (r == c) v += 1.0;
      out(r, c) = v;
      total += v;
    }
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) /= total;
  }
  return out;
}

Matrix oracle_acm(const TaskStream& stream, std::size_t t) {
  const auto seen = stream.seen_classes(t);
  const std::size_t k = seen.size();
  std::vector<std::size_t> owner(k), column(stream.total_classes(), k);
  for (std::size_t tau = 0, pos = 0; tau <= t; ++tau) {
    for (std::size_t c : stream.task(tau).classes) {
      owner[pos] = tau;
      column[c] = pos++;
    }
  }
  // Per-task single and pair counts over complete labels.
  std::vector<std::vector<double>> single(t + 1, std::vector<double>(k, 0.0));
  std::vector<Matrix> both(t + 1, Matrix(k, k));
  for (std::size_t tau = 0; tau <= t; ++tau) {
    for (const auto& ex : stream.train(tau)) {
      for (std::size_t a : ex.labels) {
        if (column[a] == k) continue;
        single[tau][column[a]] += 1.0;
        for (std::size_t b : ex.labels) {
          if (column[b] != k) both[tau](column[a], column[b]) += 1.0;
        }
      }
    }
  }
  Matrix out(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) {
        out(a, b) = 1.0;
        continue;
      }
      const std::size_t tau = std::max(owner[a], owner[b]);
      out(a, b) = clamped_ratio(both[tau](a, b), single[tau][b]);
    }
  }
  return out;
}

double acm_distance(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b) || a.rows() != a.cols()) {
    throw DimensionError("ACM distance between " + a.shape_string() + " and " + b.shape_string());
  }
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      if (r == c) continue;
      const double d = a(r, c) - b(r, c);
      total += d * d;
    }
  }
  return std::sqrt(total);
}

std::string format_acm(const ACMatrix& acm) {
  std::string out = "t=" + std::to_string(acm.task + 1) + " m=" + std::to_string(acm.boundary) +
                    " mode=" + to_string(acm.mode) + "\n";
  for (std::size_t r = 0; r < acm.values.rows(); ++r) {
    for (std::size_t c = 0; c < acm.values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(acm.values(r, c));
    }
    out += '\n';
  }
  return out;
}

ACMatrix parse_acm(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty ACM file");
  ACMatrix out;
  {
    std::istringstream head(line);
    std::string field;
    bool got_t = false, got_m = false, got_mode = false;
    while (head >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw ParseError(1, "bad header field '" + field + "'");
      const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
      try {
        if (key == "t") {
          const std::size_t t = parse_count(value, "t");
          if (t == 0) throw ParseError(1, "task index is 1-based");
          out.task = t - 1;
          got_t = true;
        } else if (key == "m") {
          out.boundary = parse_count(value, "m");
          got_m = true;
        } else if (key == "mode") {
          out.mode = parse_scenario(value);
          got_mode = true;
        } else {
          throw ParseError(1, "unknown header field '" + key + "'");
        }
      } catch (const ConfigError& e) {
        throw ParseError(1, e.what());
      }
    }
    if (!got_t || !got_m || !got_mode) throw ParseError(1, "header needs t=, m= and mode=");
  }
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      rows.push_back(parse_double_list(line, ',', "ACM row"));
    } catch (const ConfigError& e) {
      throw ParseError(line_no, e.what());
    }
    if (rows.back().size() != rows.front().size()) throw ParseError(line_no, "ragged ACM row");
  }
  const std::size_t k = rows.size();
  if (k != 0 && rows.front().size() != k) throw ParseError(line_no, "ACM is not square");
  if (out.boundary > k) throw ParseError(1, "boundary m exceeds matrix size");
  out.values = Matrix(k, k);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) out.values(r, c) = rows[r][c];
  }
  return out;
}

void save_acm(const std::filesystem::path& path, const ACMatrix& acm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << format_acm(acm);
}

ACMatrix load_acm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read ACM file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_acm(buf.str());
}

}  // namespace mlcl
