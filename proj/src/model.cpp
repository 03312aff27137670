#include "mlcl/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "mlcl/errors.hpp"
#include "mlcl/kv.hpp"
#include "mlcl/ops.hpp"
#include "mlcl/random.hpp"

namespace mlcl {

std::string to_string(GraphMode mode) {
  switch (mode) {
    case GraphMode::Dynamic: return "dynamic";
    case GraphMode::Static: return "static";
    case GraphMode::None: return "none";
  }
  return "?";
}

GraphMode parse_graph_mode(const std::string& text) {
  if (text == "dynamic") return GraphMode::Dynamic;
  if (text == "static") return GraphMode::Static;
  if (text == "none") return GraphMode::None;
  throw ConfigError("unknown graph mode '" + text + "' (expected dynamic, static or none)");
}

void ModelConfig::validate() const {
  if (input_dim == 0 || feature_dim == 0) throw ConfigError("model: input_dim and feature_dim must be >= 1");
  if (graph != GraphMode::None && (hidden_dim == 0 || graph_dim == 0)) {
    throw ConfigError("model: hidden_dim and graph_dim must be >= 1");
  }
  if (backbone_layers == 0 && input_dim != feature_dim) {
    throw ConfigError("model: identity backbone needs input_dim == feature_dim (" +
                      std::to_string(input_dim) + " vs " + std::to_string(feature_dim) + ")");
  }
  if (!(negative_slope >= 0.0 && negative_slope < 1.0)) {
    throw ConfigError("model: negative_slope must be in [0, 1)");
  }
}

namespace {

// Tags for seed derivation; new rows at task t use tag + 16 * t.
enum InitTag : std::uint64_t {
  kFc = 2,
  kTheta = 3,
  kW1 = 4,
  kW2 = 5,
  kReadout = 6,
  kEmbedding = 7,
};

void kaiming_fill(Matrix& m, std::size_t row_begin, std::size_t fan_in, double slope, Rng& rng) {
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  for (std::size_t r = row_begin; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
  }
}

Matrix kaiming(std::size_t rows, std::size_t cols, std::size_t fan_in, double slope,
               std::uint64_t seed) {
  Matrix m(rows, cols);
  Rng rng(seed);
  kaiming_fill(m, 0, fan_in, slope, rng);
  return m;
}

// Appends `extra` rows to p, initialised Kaiming-uniform (or zero for biases).
void grow_rows(Parameter& p, std::size_t extra, std::size_t fan_in, double slope,
               std::uint64_t seed, bool zero) {
  if (extra == 0) return;
  Matrix rows(extra, p.value.cols());
  if (!zero) {
    Rng rng(seed);
    kaiming_fill(rows, 0, fan_in, slope, rng);
  }
  p.value.append_rows(rows);
}

std::uint64_t row_seed(const ModelConfig& c, InitTag tag, std::size_t task) {
  return derive_seed(c.seed, static_cast<std::uint64_t>(tag) + 16 * task);
}

}  // namespace

ModelState ModelState::create(const ModelConfig& config, std::size_t first_task_classes) {
  config.validate();
  if (first_task_classes == 0) throw ConfigError("model: the first task needs at least one class");
  ModelState s;
  s.config_ = config;
  s.classes_ = first_task_classes;
  const std::size_t d = config.feature_dim, c = first_task_classes;
  const double a = config.negative_slope;

  s.backbone.negative_slope = a;
  for (std::size_t l = 0; l < config.backbone_layers; ++l) {
    const std::size_t in = l == 0 ? config.input_dim : d;
    s.backbone.weights.push_back({"backbone." + std::to_string(l) + ".weight",
                                  kaiming(in, d, in, a, derive_seed(config.seed, 100 + l))});
    s.backbone.biases.push_back({"backbone." + std::to_string(l) + ".bias", Matrix(1, d)});
  }
  s.fc_w = {"fc.weight", kaiming(c, d, d, a, row_seed(config, kFc, 0))};
  s.fc_b = {"fc.bias", Matrix(c, 1)};
  if (config.graph == GraphMode::Dynamic) {
    s.theta = {"ple.theta", kaiming(c, d, d, a, row_seed(config, kTheta, 0))};
    s.w1 = {"gcn.w1", kaiming(d, config.hidden_dim, d, a, row_seed(config, kW1, 0))};
    s.w2 = {"gcn.w2", kaiming(config.hidden_dim, config.graph_dim, config.hidden_dim, a,
                              row_seed(config, kW2, 0))};
    s.readout_w = {"gcn.readout.weight",
                   kaiming(config.graph_dim, 1, config.graph_dim, a, row_seed(config, kReadout, 0))};
    s.readout_b = {"gcn.readout.bias", Matrix(1, 1)};
  } else if (config.graph == GraphMode::Static) {
    s.embedding = {"static.embedding", kaiming(c, d, d, a, row_seed(config, kEmbedding, 0))};
    s.w1 = {"gcn.w1", kaiming(d, config.hidden_dim, d, a, row_seed(config, kW1, 0))};
    s.w2 = {"gcn.w2", kaiming(config.hidden_dim, d, config.hidden_dim, a, row_seed(config, kW2, 0))};
  }
  return s;
}

std::vector<Parameter*> ModelState::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < backbone.layers(); ++l) {
    out.push_back(&backbone.weights[l]);
    out.push_back(&backbone.biases[l]);
  }
  out.push_back(&fc_w);
  out.push_back(&fc_b);
  if (config_.graph == GraphMode::Dynamic) {
    for (Parameter* p : {&theta, &w1, &w2, &readout_w, &readout_b}) out.push_back(p);
  } else if (config_.graph == GraphMode::Static) {
    for (Parameter* p : {&embedding, &w1, &w2}) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> ModelState::parameters() const {
  auto mut = const_cast<ModelState*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void expand_for_task(ModelState& s, std::size_t task, std::size_t new_classes) {
  if (task != s.task_ + 1) {
    throw StateError("expand_for_task: model is at task " + std::to_string(s.task_ + 1) +
                     ", cannot expand for task " + std::to_string(task + 1));
  }
  const ModelConfig& c = s.config_;
  const std::size_t d = c.feature_dim;
  const double a = c.negative_slope;
  grow_rows(s.fc_w, new_classes, d, a, row_seed(c, kFc, task), false);
  grow_rows(s.fc_b, new_classes, d, a, 0, true);
  if (c.graph == GraphMode::Dynamic) grow_rows(s.theta, new_classes, d, a, row_seed(c, kTheta, task), false);
  if (c.graph == GraphMode::Static) {
    grow_rows(s.embedding, new_classes, d, a, row_seed(c, kEmbedding, task), false);
  }
  s.old_classes_ = s.classes_;
  s.classes_ += new_classes;
  s.task_ = task;
}

// ---- forward pieces ----

namespace {

// Trainable binding takes the parameter by mutable reference; only reachable through the
// non-const entry points.
Var bind(Tape& tape, const Parameter& p, bool trainable) {
  if (trainable) return tape.parameter(const_cast<Parameter&>(p));
  return tape.constant(p.value);
}

}  // namespace

Var backbone_forward(Tape& tape, const Backbone& bb, Var x, bool trainable) {
  if (!x.value().all_finite()) throw ContractError("backbone input contains NaN or Inf");
  if (bb.layers() > 0 && x.cols() != bb.weights[0].value.rows()) {
    throw DimensionError("backbone input width " + std::to_string(x.cols()) + ", expected " +
                         std::to_string(bb.weights[0].value.rows()));
  }
  Var h = x;
  for (std::size_t l = 0; l < bb.layers(); ++l) {
    h = ad::add_row_bias(ad::matmul(h, bind(tape, bb.weights[l], trainable)),
                         bind(tape, bb.biases[l], trainable));
    h = ad::leaky_relu(h, bb.negative_slope);
  }
  return h;
}

Matrix backbone_forward(const Backbone& bb, const Matrix& x) {
  Tape tape;
  return backbone_forward(tape, bb, tape.constant(x), false).value();
}

PleOutput ple_forward(Tape& tape, ModelState& s, Var features, const Matrix& prior, bool trainable) {
  if (s.config().graph != GraphMode::Dynamic) throw StateError("ple_forward needs the dynamic graph mode");
  if (s.old_classes() > 0 && prior.rows() == 0) {
    throw StateError("model has " + std::to_string(s.old_classes()) +
                     " old classes but no expert features were given");
  }
  PleOutput out;
  out.cal = ad::add_col_bias(ad::matmul_nt(features, bind(tape, s.fc_w, trainable)),
                             bind(tape, s.fc_b, trainable));
  out.nodes = ad::class_nodes(bind(tape, s.theta, trainable), features, prior, s.old_classes());
  return out;
}

Var gcn_forward(Tape& tape, ModelState& s, const Matrix& a_hat, Var nodes, bool trainable) {
  const std::size_t c = s.num_classes();
  if (a_hat.rows() != c || a_hat.cols() != c) {
    throw DimensionError("adjacency " + a_hat.shape_string() + " for " + std::to_string(c) + " classes");
  }
  if (nodes.rows() % c != 0) throw DimensionError("graph nodes " + nodes.value().shape_string());
  const std::size_t batch = nodes.rows() / c;
  Var z1 = ad::leaky_relu(ad::block_propagate(a_hat, ad::matmul(nodes, bind(tape, s.w1, trainable))),
                          s.config().negative_slope);
  Var z2 = ad::block_propagate(a_hat, ad::matmul(z1, bind(tape, s.w2, trainable)));
  Var score = ad::add_row_bias(ad::matmul(z2, bind(tape, s.readout_w, trainable)),
                               bind(tape, s.readout_b, trainable));
  return ad::reshape(score, batch, c);
}

Var static_node_forward(Tape& tape, ModelState& s, const Matrix& a_hat, Var features, bool trainable) {
  if (s.config().graph != GraphMode::Static) throw StateError("static_node_forward needs the static graph mode");
  const std::size_t c = s.num_classes();
  if (a_hat.rows() != c || a_hat.cols() != c) {
    throw DimensionError("adjacency " + a_hat.shape_string() + " for " + std::to_string(c) + " classes");
  }
  Var e = bind(tape, s.embedding, trainable);
  Var z1 = ad::leaky_relu(ad::block_propagate(a_hat, ad::matmul(e, bind(tape, s.w1, trainable))),
                          s.config().negative_slope);
  Var z2 = ad::block_propagate(a_hat, ad::matmul(z1, bind(tape, s.w2, trainable)));
  return ad::matmul_nt(features, z2);
}

Matrix predict(const Matrix& cal, const Matrix& gph) {
  if (!cal.same_shape(gph)) {
    throw DimensionError("predict: " + cal.shape_string() + " vs " + gph.shape_string());
  }
  Matrix out(cal.rows(), cal.cols());
  for (std::size_t k = 0; k < out.data().size(); ++k) {
    out.data()[k] = 1.0 / (1.0 + std::exp(-(cal.data()[k] + gph.data()[k])));
  }
  return out;
}

ForwardVars model_forward(Tape& tape, ModelState& s, const Matrix& x, const Matrix& a_hat,
                          const Matrix& prior, bool trainable) {
  ForwardVars out;
  out.features = backbone_forward(tape, s.backbone, tape.constant(x), trainable);
  switch (s.config().graph) {
    case GraphMode::Dynamic: {
      const PleOutput ple = ple_forward(tape, s, out.features, prior, trainable);
      out.cal = ple.cal;
      out.gph = gcn_forward(tape, s, a_hat, ple.nodes, trainable);
      out.logits = ad::add(out.cal, out.gph);
      break;
    }
    case GraphMode::Static:
      out.cal = ad::add_col_bias(ad::matmul_nt(out.features, bind(tape, s.fc_w, trainable)),
                                 bind(tape, s.fc_b, trainable));
      out.gph = static_node_forward(tape, s, a_hat, out.features, trainable);
      out.logits = ad::add(out.cal, out.gph);
      break;
    case GraphMode::None:
      out.cal = ad::add_col_bias(ad::matmul_nt(out.features, bind(tape, s.fc_w, trainable)),
                                 bind(tape, s.fc_b, trainable));
      out.logits = out.cal;
      break;
  }
  out.probs = ad::sigmoid(out.logits);
  return out;
}

ForwardVars model_forward(Tape& tape, const ModelState& s, const Matrix& x, const Matrix& a_hat,
                          const Matrix& prior) {
  return model_forward(tape, const_cast<ModelState&>(s), x, a_hat, prior, false);
}

Prediction predict_batch(const ModelState& state, const ExpertSnapshot* expert, const Matrix& a_hat,
                         const Matrix& x) {
  Matrix prior;
  if (state.config().graph == GraphMode::Dynamic && state.old_classes() > 0) {
    if (!expert) throw StateError("predict_batch: old-class nodes need the expert backbone");
    prior = expert->features(x);
  }
  Tape tape;
  const ForwardVars f = model_forward(tape, state, x, a_hat, prior);
  Prediction out;
  out.probs = f.probs.value();
  if (f.gph.valid()) out.gph = f.gph.value();
  return out;
}

// ---- expert ----

ExpertSnapshot::ExpertSnapshot(ModelState model, std::optional<Backbone> prior_backbone, ACMatrix acm,
                               NormalizeOptions normalize)
    : model_(std::move(model)),
      prior_backbone_(std::move(prior_backbone)),
      acm_(std::move(acm)),
      normalize_(normalize) {
  if (model_.config().graph != GraphMode::None) {
    if (acm_.size() != model_.num_classes()) {
      throw DimensionError("expert ACM is " + acm_.values.shape_string() + " for " +
                           std::to_string(model_.num_classes()) + " classes");
    }
    a_hat_ = normalize_for_gcn(acm_.values, normalize);
  }
  if (model_.config().graph == GraphMode::Dynamic && model_.old_classes() > 0 && !prior_backbone_) {
    throw StateError("expert with old classes needs the backbone that fed them");
  }
  checksum_ = mlcl::checksum(model_) ^ (prior_backbone_ ? mlcl::checksum(*prior_backbone_) * 31 : 0);
}

Matrix ExpertSnapshot::features(const Matrix& x) const { return backbone_forward(model_.backbone, x); }

Prediction ExpertSnapshot::forward(const Matrix& x) const {
  Matrix prior;
  if (model_.config().graph == GraphMode::Dynamic && model_.old_classes() > 0) {
    prior = backbone_forward(*prior_backbone_, x);
  }
  Tape tape;
  const ForwardVars f = model_forward(tape, model_, x, a_hat_, prior);
  Prediction out;
  out.probs = f.probs.value();
  if (f.gph.valid()) out.gph = f.gph.value();
  return out;
}

ExpertSnapshot random_expert_like(const ExpertSnapshot& expert, std::uint64_t seed) {
  ModelState model = expert.model();
  Rng rng(seed);
  auto scramble = [&](Parameter& p) {
    const std::size_t fan_in = p.value.cols() == 1 ? p.value.rows() : p.value.cols();
    kaiming_fill(p.value, 0, std::max<std::size_t>(fan_in, 1), model.config().negative_slope, rng);
  };
  for (Parameter* p : model.parameters()) scramble(*p);
  std::optional<Backbone> prior = expert.prior_backbone();
  if (prior) {
    for (auto& w : prior->weights) scramble(w);
    for (auto& b : prior->biases) scramble(b);
  }
  return ExpertSnapshot(std::move(model), std::move(prior), expert.acm(), expert.normalize());
}

namespace {

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv_matrix(std::uint64_t h, const Matrix& m) {
  const std::uint64_t shape[2] = {m.rows(), m.cols()};
  h = fnv(h, shape, sizeof shape);
  return fnv(h, m.data().data(), m.data().size() * sizeof(double));
}

}  // namespace

std::uint64_t checksum(const Backbone& bb) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t l = 0; l < bb.layers(); ++l) {
    h = fnv_matrix(h, bb.weights[l].value);
    h = fnv_matrix(h, bb.biases[l].value);
  }
  return h;
}

std::uint64_t checksum(const ModelState& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter* p : s.parameters()) h = fnv_matrix(h, p->value);
  return h;
}

// ---- checkpoints ----

struct ModelStateAccess {
  static void set(ModelState& s, const ModelConfig& c, std::size_t classes, std::size_t old,
                  std::size_t task) {
    s.config_ = c;
    s.classes_ = classes;
    s.old_classes_ = old;
    s.task_ = task;
  }
};

namespace {

class Writer {
 public:
  void key(const std::string& k, const std::string& v) { out_ << k << ' ' << v << '\n'; }
  void matrix(const std::string& name, const Matrix& m) {
    out_ << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) out_ << (c ? "," : "") << format_double(m(r, c));
      out_ << '\n';
    }
  }
  void backbone(const std::string& prefix, const Backbone& bb) {
    key(prefix + "layers", std::to_string(bb.layers()));
    key(prefix + "slope", format_double(bb.negative_slope));
    for (std::size_t l = 0; l < bb.layers(); ++l) {
      matrix(prefix + bb.weights[l].name, bb.weights[l].value);
      matrix(prefix + bb.biases[l].name, bb.biases[l].value);
    }
  }
  void model(const std::string& prefix, const ModelState& s) {
    const ModelConfig& c = s.config();
    key(prefix + "input_dim", std::to_string(c.input_dim));
    key(prefix + "feature_dim", std::to_string(c.feature_dim));
    key(prefix + "hidden_dim", std::to_string(c.hidden_dim));
    key(prefix + "graph_dim", std::to_string(c.graph_dim));
    key(prefix + "negative_slope", format_double(c.negative_slope));
    key(prefix + "graph", to_string(c.graph));
    key(prefix + "seed", std::to_string(c.seed));
    key(prefix + "classes", std::to_string(s.num_classes()));
    key(prefix + "old_classes", std::to_string(s.old_classes()));
    key(prefix + "task", std::to_string(s.task() + 1));
    backbone(prefix, s.backbone);
    for (const Parameter* p : s.parameters()) {
      if (p->name.rfind("backbone.", 0) != 0) matrix(prefix + p->name, p->value);
    }
  }
  void acm(const std::string& prefix, const ACMatrix& a) {
    key(prefix + "acm.task", std::to_string(a.task + 1));
    key(prefix + "acm.boundary", std::to_string(a.boundary));
    key(prefix + "acm.mode", to_string(a.mode));
    matrix(prefix + "acm.values", a.values);
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (line_no == 1) {
        if (line != "mlcl-checkpoint 1") throw ParseError(1, "not a checkpoint file");
        continue;
      }
      std::istringstream ls(line);
      std::string head;
      ls >> head;
      if (head == "matrix") {
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(ls >> name >> rows >> cols)) throw ParseError(line_no, "bad matrix header");
        Matrix m(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
          if (!std::getline(in, line)) throw ParseError(line_no, "truncated matrix '" + name + "'");
          ++line_no;
          std::vector<double> v;
          try {
            v = parse_double_list(line, ',', name);
          } catch (const ConfigError& e) {
            throw ParseError(line_no, e.what());
          }
          if (v.size() != cols) throw ParseError(line_no, "matrix '" + name + "' row width");
          for (std::size_t c = 0; c < cols; ++c) m(r, c) = v[c];
        }
        matrices_[name] = std::move(m);
      } else {
        std::string value;
        std::getline(ls >> std::ws, value);
        keys_[head] = value;
      }
    }
    if (line_no == 0) throw ParseError(1, "empty checkpoint");
  }

  bool has(const std::string& k) const { return keys_.count(k) != 0; }
  const std::string& key(const std::string& k) const {
    auto it = keys_.find(k);
    if (it == keys_.end()) throw DataError("checkpoint is missing '" + k + "'");
    return it->second;
  }
  std::size_t count(const std::string& k) const { return parse_count(key(k), k); }
  Matrix matrix(const std::string& name) const {
    auto it = matrices_.find(name);
    if (it == matrices_.end()) throw DataError("checkpoint is missing matrix '" + name + "'");
    return it->second;
  }

  Backbone backbone(const std::string& prefix) const {
    Backbone bb;
    bb.negative_slope = parse_double(key(prefix + "slope"), "slope");
    for (std::size_t l = 0, n = count(prefix + "layers"); l < n; ++l) {
      const std::string w = "backbone." + std::to_string(l) + ".weight";
      const std::string b = "backbone." + std::to_string(l) + ".bias";
      bb.weights.push_back({w, matrix(prefix + w)});
      bb.biases.push_back({b, matrix(prefix + b)});
    }
    return bb;
  }

  ModelState model(const std::string& prefix) const {
    ModelConfig c;
    c.input_dim = count(prefix + "input_dim");
    c.feature_dim = count(prefix + "feature_dim");
    c.hidden_dim = count(prefix + "hidden_dim");
    c.graph_dim = count(prefix + "graph_dim");
    c.negative_slope = parse_double(key(prefix + "negative_slope"), "negative_slope");
    c.graph = parse_graph_mode(key(prefix + "graph"));
    c.seed = std::stoull(key(prefix + "seed"));
    ModelState s;
    s.backbone = backbone(prefix);
    c.backbone_layers = s.backbone.layers();
    const std::size_t task = count(prefix + "task");
    if (task == 0) throw DataError("checkpoint task index is 1-based");
    ModelStateAccess::set(s, c, count(prefix + "classes"), count(prefix + "old_classes"), task - 1);
    auto load = [&](Parameter& p, const char* name) { p = {name, matrix(prefix + name)}; };
    load(s.fc_w, "fc.weight");
    load(s.fc_b, "fc.bias");
    if (c.graph == GraphMode::Dynamic) {
      load(s.theta, "ple.theta");
      load(s.w1, "gcn.w1");
      load(s.w2, "gcn.w2");
      load(s.readout_w, "gcn.readout.weight");
      load(s.readout_b, "gcn.readout.bias");
    } else if (c.graph == GraphMode::Static) {
      load(s.embedding, "static.embedding");
      load(s.w1, "gcn.w1");
      load(s.w2, "gcn.w2");
    }
    if (s.fc_w.value.rows() != s.num_classes()) throw DataError("checkpoint fc rows disagree with class count");
    return s;
  }

  ACMatrix acm(const std::string& prefix) const {
    ACMatrix a;
    const std::size_t t = count(prefix + "acm.task");
    if (t == 0) throw DataError("checkpoint ACM task index is 1-based");
    a.task = t - 1;
    a.boundary = count(prefix + "acm.boundary");
    a.mode = parse_scenario(key(prefix + "acm.mode"));
    a.values = matrix(prefix + "acm.values");
    return a;
  }

 private:
  std::map<std::string, std::string> keys_;
  std::map<std::string, Matrix> matrices_;
};

}  // namespace

std::string format_checkpoint(const Checkpoint& cp) {
  Writer w;
  std::string classes;
  for (std::size_t i = 0; i < cp.classes.size(); ++i) classes += (i ? ";" : "") + std::to_string(cp.classes[i]);
  w.key("task", std::to_string(cp.task + 1));
  w.key("classes", classes.empty() ? "-" : classes);
  w.model("model.", cp.model);
  if (cp.acm) w.acm("", *cp.acm);
  w.key("expert", cp.expert ? "yes" : "no");
  if (cp.expert) {
    w.model("expert.", cp.expert->model());
    w.acm("expert.", cp.expert->acm());
    const auto& threshold = cp.expert->normalize().binarize_threshold;
    w.key("expert.binarize", threshold ? format_double(*threshold) : "none");
    w.key("expert.prior", cp.expert->prior_backbone() ? "yes" : "no");
    if (cp.expert->prior_backbone()) w.backbone("expert.prior.", *cp.expert->prior_backbone());
  }
  return "mlcl-checkpoint 1\n" + w.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
  const Reader r(text);
  Checkpoint cp;
  const std::size_t task = r.count("task");
  if (task == 0) throw DataError("checkpoint task index is 1-based");
  cp.task = task - 1;
  if (r.key("classes") != "-") cp.classes = parse_index_list(r.key("classes"), ';', "classes");
  cp.model = r.model("model.");
  if (r.has("acm.task")) cp.acm = r.acm("");
  if (r.key("expert") == "yes") {
    std::optional<Backbone> prior;
    if (r.key("expert.prior") == "yes") prior = r.backbone("expert.prior.");
    NormalizeOptions normalize;
    if (r.key("expert.binarize") != "none") {
      normalize.binarize_threshold = parse_double(r.key("expert.binarize"), "expert.binarize");
    }
    cp.expert = ExpertSnapshot(r.model("expert."), std::move(prior), r.acm("expert."), normalize);
  }
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& cp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << format_checkpoint(cp);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace mlcl
