#include <algorithm>
#include <cmath>
#include <limits>

#include "mlcl/errors.hpp"
#include "mlcl/random.hpp"
#include "mlcl/stream.hpp"

namespace mlcl {

namespace {

constexpr double kProbTol = 1e-12;
constexpr std::size_t kMaxFreeClasses = 16;

// Dense Cholesky solve of (H + ridge I) x = b; H symmetric positive semi-definite.
std::vector<double> cholesky_solve(std::vector<double> h, std::size_t n, std::vector<double> b,
                                   double ridge) {
  for (std::size_t i = 0; i < n; ++i) h[i * n + i] += ridge;
  for (std::size_t j = 0; j < n; ++j) {
    double d = h[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= h[j * n + k] * h[j * n + k];
    if (!(d > 0)) d = 1e-300;
    const double l = std::sqrt(d);
    h[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = h[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= h[i * n + k] * h[j * n + k];
      h[i * n + j] = s / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= h[i * n + k] * b[k];
    b[i] = s / h[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= h[k * n + i] * b[k];
    b[i] = s / h[i * n + i];
  }
  return b;
}

// Sufficient statistics of one label state: indices of active single and pair features.
void active_features(std::size_t state, std::size_t k,
                     const std::vector<std::vector<std::size_t>>& pair_index,
                     std::vector<std::size_t>& out) {
  out.clear();
  std::size_t bits[64];
  std::size_t nb = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (state >> i & 1U) bits[nb++] = i;
  }
  for (std::size_t a = 0; a < nb; ++a) out.push_back(bits[a]);
  for (std::size_t a = 0; a < nb; ++a) {
    for (std::size_t b = a + 1; b < nb; ++b) out.push_back(pair_index[bits[a]][bits[b]]);
  }
}

}  // namespace

void CooccurrenceSpec::validate() const {
  const std::size_t k = marginals.size();
  if (k == 0) throw ConfigError("co-occurrence spec: no classes");
  if (joint.rows() != k || joint.cols() != k) {
    throw ConfigError("co-occurrence spec: joint matrix " + joint.shape_string() + " for " +
                      std::to_string(k) + " classes");
  }
  if (prototypes.rows() != k || prototypes.cols() == 0) {
    throw ConfigError("co-occurrence spec: prototypes " + prototypes.shape_string() + " for " +
                      std::to_string(k) + " classes (need D >= 1)");
  }
  if (!(noise >= 0) || !std::isfinite(noise)) throw ConfigError("co-occurrence spec: noise < 0");
  if (!prototypes.all_finite()) throw ConfigError("co-occurrence spec: non-finite prototypes");
  bool any_positive = false;
  for (std::size_t i = 0; i < k; ++i) {
    const double p = marginals[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ConfigError("co-occurrence spec: marginal of class " + std::to_string(i) + " = " +
                        std::to_string(p) + " outside [0, 1]");
    }
    any_positive = any_positive || p > 0.0;
  }
  if (!any_positive) throw ConfigError("co-occurrence spec: all marginals are zero");
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double pij = joint(i, j);
      if (pij != joint(j, i)) throw ConfigError("co-occurrence spec: joint matrix not symmetric");
      const double lo = std::max(0.0, marginals[i] + marginals[j] - 1.0);
      const double hi = std::min(marginals[i], marginals[j]);
      if (!(pij >= lo - kProbTol && pij <= hi + kProbTol)) {
        throw ConfigError("co-occurrence spec: P(" + std::to_string(i) + "," + std::to_string(j) +
                          ") = " + std::to_string(pij) + " infeasible for the marginals");
      }
    }
  }
}

std::vector<std::vector<std::size_t>> contiguous_partition(std::size_t classes, std::size_t tasks) {
  if (tasks == 0 || tasks > classes) {
    throw ConfigError("cannot split " + std::to_string(classes) + " classes into " +
                      std::to_string(tasks) + " tasks");
  }
  std::vector<std::vector<std::size_t>> out(tasks);
  std::size_t next = 0;
  for (std::size_t t = 0; t < tasks; ++t) {
    const std::size_t size = classes / tasks + (t < classes % tasks ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) out[t].push_back(next++);
  }
  return out;
}

CooccurrenceSpec make_chain_spec(const ChainSpecParams& params) {
  const auto partition = contiguous_partition(params.classes, params.tasks);
  if (params.feature_dim == 0) throw ConfigError("synthetic spec: feature_dim must be >= 1");
  const double w_chain = params.chain_weight, w_task = params.task_weight;
  if (!(w_chain >= 0 && w_task >= 0 && w_chain + w_task <= 1.0)) {
    throw ConfigError("synthetic spec: chain_weight and task_weight must be >= 0 with sum <= 1");
  }
  for (double q : {params.active_prob, params.background_prob}) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("synthetic spec: probabilities must be in (0, 1)");
  }
  if (!(params.marginal_jitter >= 0.0 && params.marginal_jitter < 1.0)) {
    throw ConfigError("synthetic spec: marginal_jitter must be in [0, 1)");
  }
  Rng rng(params.seed);
  const std::size_t k = params.classes;
  std::size_t chains = 0;
  for (const auto& set : partition) chains = std::max(chains, set.size());

  // Mixture components: one per chain position (that position active in every task),
  // one per task (the whole task active) and a background profile.
  std::vector<double> weight;
  std::vector<std::vector<double>> prob;
  std::vector<double> jitter(k);
  for (double& j : jitter) j = 1.0 - params.marginal_jitter + 2.0 * params.marginal_jitter * rng.uniform();
  auto profile = [&](auto active) {
    std::vector<double> q(k);
    for (std::size_t t = 0; t < partition.size(); ++t) {
      for (std::size_t r = 0; r < partition[t].size(); ++r) {
        const std::size_t c = partition[t][r];
        const double base = active(t, r) ? params.active_prob : params.background_prob;
        q[c] = std::clamp(base * jitter[c], 1e-6, 1.0 - 1e-6);
      }
    }
    return q;
  };
  for (std::size_t r = 0; r < chains; ++r) {
    weight.push_back(w_chain / static_cast<double>(chains));
    prob.push_back(profile([r](std::size_t, std::size_t pos) { return pos == r; }));
  }
  for (std::size_t t = 0; t < partition.size(); ++t) {
    weight.push_back(w_task / static_cast<double>(partition.size()));
    prob.push_back(profile([t](std::size_t task, std::size_t) { return task == t; }));
  }
  weight.push_back(1.0 - w_chain - w_task);
  prob.push_back(profile([](std::size_t, std::size_t) { return false; }));

  CooccurrenceSpec spec;
  spec.noise = params.noise;
  spec.marginals.assign(k, 0.0);
  spec.joint = Matrix(k, k);
  for (std::size_t m = 0; m < weight.size(); ++m) {
    for (std::size_t i = 0; i < k; ++i) {
      spec.marginals[i] += weight[m] * prob[m][i];
      for (std::size_t j = i + 1; j < k; ++j) spec.joint(i, j) += weight[m] * prob[m][i] * prob[m][j];
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    spec.joint(i, i) = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) spec.joint(j, i) = spec.joint(i, j);
  }
  spec.prototypes = Matrix(k, params.feature_dim);
  for (double& v : spec.prototypes.data()) v = rng.normal();
  spec.validate();
  return spec;
}

LabelSampler::LabelSampler(const CooccurrenceSpec& spec) : num_classes_(spec.num_classes()) {
  spec.validate();
  for (std::size_t c = 0; c < num_classes_; ++c) {
    const double p = spec.marginals[c];
    if (p >= 1.0) {
      always_.push_back(c);
    } else if (p > 0.0) {
      free_.push_back(c);
    }
  }
  const std::size_t k = free_.size();
  if (k > kMaxFreeClasses) {
    throw ConfigError("synthetic generator supports at most " + std::to_string(kMaxFreeClasses) +
                      " classes with marginal strictly inside (0, 1), got " + std::to_string(k));
  }
  const std::size_t states = std::size_t{1} << k;

  std::vector<std::vector<std::size_t>> pair_index(k, std::vector<std::size_t>(k, 0));
  std::vector<double> target;
  for (std::size_t i = 0; i < k; ++i) target.push_back(spec.marginals[free_[i]]);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      pair_index[a][b] = target.size();
      target.push_back(spec.joint(free_[a], free_[b]));
    }
  }
  const std::size_t nf = target.size();
  std::vector<double> theta(nf, 0.0);
  for (std::size_t i = 0; i < k; ++i) theta[i] = std::log(target[i] / (1.0 - target[i]));

  std::vector<std::vector<std::size_t>> active(states);
  for (std::size_t s = 0; s < states; ++s) active_features(s, k, pair_index, active[s]);

  std::vector<double> energy(states), prob(states);
  auto log_partition = [&](const std::vector<double>& th) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < states; ++s) {
      double e = 0.0;
      for (std::size_t f : active[s]) e += th[f];
      energy[s] = e;
      mx = std::max(mx, e);
    }
    double z = 0.0;
    for (std::size_t s = 0; s < states; ++s) z += std::exp(energy[s] - mx);
    return mx + std::log(z);
  };
  auto objective = [&](const std::vector<double>& th) {
    double dot = 0.0;
    for (std::size_t f = 0; f < nf; ++f) dot += th[f] * target[f];
    return log_partition(th) - dot;
  };

  double grad_max = 1.0;
  for (int iter = 0; iter < 200 && nf > 0; ++iter) {
    const double logz = log_partition(theta);
    std::vector<double> mean(nf, 0.0), hess(nf * nf, 0.0);
    for (std::size_t s = 0; s < states; ++s) {
      const double p = std::exp(energy[s] - logz);
      prob[s] = p;
      const auto& on = active[s];
      for (std::size_t a = 0; a < on.size(); ++a) {
        mean[on[a]] += p;
        for (std::size_t b = 0; b <= a; ++b) hess[on[a] * nf + on[b]] += p;
      }
    }
    std::vector<double> grad(nf);
    grad_max = 0.0;
    for (std::size_t f = 0; f < nf; ++f) {
      grad[f] = mean[f] - target[f];
      grad_max = std::max(grad_max, std::abs(grad[f]));
    }
    if (grad_max < 1e-12) break;
    for (std::size_t a = 0; a < nf; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        const double v = hess[a * nf + b] - mean[a] * mean[b];
        hess[a * nf + b] = v;
        hess[b * nf + a] = v;
      }
    }
    const std::vector<double> step = cholesky_solve(hess, nf, grad, 1e-12);
    double slope = 0.0;
    for (std::size_t f = 0; f < nf; ++f) slope += grad[f] * step[f];
    const double base = logz - [&] {
      double d = 0.0;
      for (std::size_t f = 0; f < nf; ++f) d += theta[f] * target[f];
      return d;
    }();
    double alpha = 1.0;
    std::vector<double> trial(nf);
    for (int ls = 0; ls < 40; ++ls) {
      for (std::size_t f = 0; f < nf; ++f) trial[f] = theta[f] - alpha * step[f];
      if (objective(trial) <= base - 1e-4 * alpha * slope) break;
      alpha *= 0.5;
    }
    theta = trial;
  }
  if (nf > 0) {
    const double logz = log_partition(theta);
    std::vector<double> mean(nf, 0.0);
    for (std::size_t s = 0; s < states; ++s) {
      prob[s] = std::exp(energy[s] - logz);
      for (std::size_t f : active[s]) mean[f] += prob[s];
    }
    grad_max = 0.0;
    for (std::size_t f = 0; f < nf; ++f) grad_max = std::max(grad_max, std::abs(mean[f] - target[f]));
    if (grad_max > 1e-6) {
      throw ConfigError("co-occurrence spec: pairwise targets are not realisable (residual " +
                        std::to_string(grad_max) + ")");
    }
  } else {
    prob.assign(1, 1.0);
  }
  state_prob_ = prob;

  cdf_.resize(states);
  double acc = 0.0;
  for (std::size_t s = 0; s < states; ++s) {
    if (s == 0 && always_.empty()) {
      cdf_[s] = 0.0;
      continue;
    }
    acc += state_prob_[s];
    cdf_[s] = acc;
  }
  for (double& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

double LabelSampler::fitted_marginal(std::size_t c) const {
  if (std::find(always_.begin(), always_.end(), c) != always_.end()) return 1.0;
  auto it = std::find(free_.begin(), free_.end(), c);
  if (it == free_.end()) return 0.0;
  const std::size_t bit = static_cast<std::size_t>(it - free_.begin());
  double p = 0.0;
  for (std::size_t s = 0; s < state_prob_.size(); ++s) {
    if (s >> bit & 1U) p += state_prob_[s];
  }
  return p;
}

double LabelSampler::fitted_joint(std::size_t i, std::size_t j) const {
  auto bit_of = [&](std::size_t c) -> long {
    auto it = std::find(free_.begin(), free_.end(), c);
    return it == free_.end() ? -1 : static_cast<long>(it - free_.begin());
  };
  const bool ai = std::find(always_.begin(), always_.end(), i) != always_.end();
  const bool aj = std::find(always_.begin(), always_.end(), j) != always_.end();
  if (ai) return fitted_marginal(j);
  if (aj) return fitted_marginal(i);
  const long bi = bit_of(i), bj = bit_of(j);
  if (bi < 0 || bj < 0) return 0.0;
  double p = 0.0;
  for (std::size_t s = 0; s < state_prob_.size(); ++s) {
    if ((s >> bi & 1U) && (s >> bj & 1U)) p += state_prob_[s];
  }
  return p;
}

std::vector<std::size_t> LabelSampler::sample(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const std::size_t state = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()),
                                                  cdf_.size() - 1);
  std::vector<std::size_t> labels = always_;
  for (std::size_t b = 0; b < free_.size(); ++b) {
    if (state >> b & 1U) labels.push_back(free_[b]);
  }
  std::sort(labels.begin(), labels.end());
  return labels;
}

Dataset generate_synthetic(const CooccurrenceSpec& spec, std::size_t n, std::uint64_t seed) {
  const LabelSampler sampler(spec);
  return generate_synthetic(spec, sampler, n, seed);
}

Dataset generate_synthetic(const CooccurrenceSpec& spec, const LabelSampler& sampler,
                           std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("generate_synthetic: n must be > 0");
  spec.validate();
  Rng rng(seed);
  const std::size_t d = spec.feature_dim();
  Dataset out;
  out.reserve(n);
  for (std::size_t e = 0; e < n; ++e) {
    LabeledExample ex;
    ex.labels = sampler.sample(rng);
    ex.features.assign(d, 0.0);
    const double w = 1.0 / static_cast<double>(ex.labels.size());
    for (std::size_t c : ex.labels) {
      for (std::size_t i = 0; i < d; ++i) ex.features[i] += w * spec.prototypes(c, i);
    }
    for (double& v : ex.features) v += spec.noise * rng.normal();
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace mlcl
