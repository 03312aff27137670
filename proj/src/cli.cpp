#include "mlcl/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "mlcl/acm.hpp"
#include "mlcl/errors.hpp"
#include "mlcl/losses.hpp"
#include "mlcl/model.hpp"

namespace fs = std::filesystem;

namespace mlcl {

namespace {

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

Setter count_into(std::size_t ExperimentConfig::*field) {
  return [field](ExperimentConfig& c, const std::string& v, const std::string& k) { c.*field = parse_count(v, k); };
}

template <typename F>
Setter with(F f) {
  return [f](ExperimentConfig& c, const std::string& v, const std::string& k) { f(c, v, k); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto cnt = [](const std::string& v, const std::string& k) { return parse_count(v, k); };
    auto dbl = [](const std::string& v, const std::string& k) { return parse_double(v, k); };
    auto flag = [](const std::string& v, const std::string& k) { return parse_bool(v, k); };

    t["stream.source"] = with([](ExperimentConfig& c, const std::string& v, const std::string& k) {
      if (v != "synthetic" && v != "file") throw ConfigError(k + ": expected synthetic or file, got '" + v + "'");
      c.source = v;
    });
    t["stream.examples"] = count_into(&ExperimentConfig::examples);
    t["stream.classes"] = with([=](auto& c, auto& v, auto& k) { c.chain.classes = cnt(v, k); });
    t["stream.tasks"] = with([=](auto& c, auto& v, auto& k) { c.chain.tasks = cnt(v, k); });
    t["stream.feature_dim"] = with([=](auto& c, auto& v, auto& k) { c.chain.feature_dim = cnt(v, k); });
    t["stream.chain_weight"] = with([=](auto& c, auto& v, auto& k) { c.chain.chain_weight = dbl(v, k); });
    t["stream.task_weight"] = with([=](auto& c, auto& v, auto& k) { c.chain.task_weight = dbl(v, k); });
    t["stream.active_prob"] = with([=](auto& c, auto& v, auto& k) { c.chain.active_prob = dbl(v, k); });
    t["stream.background_prob"] = with([=](auto& c, auto& v, auto& k) { c.chain.background_prob = dbl(v, k); });
    t["stream.marginal_jitter"] = with([=](auto& c, auto& v, auto& k) { c.chain.marginal_jitter = dbl(v, k); });
    t["stream.noise"] = with([=](auto& c, auto& v, auto& k) { c.chain.noise = dbl(v, k); });
    t["stream.seed"] = with([=](auto& c, auto& v, auto& k) { c.chain.seed = cnt(v, k); });
    t["stream.split_seed"] = with([=](auto& c, auto& v, auto& k) { c.split_seed = cnt(v, k); });
    t["stream.train_fraction"] = with([=](auto& c, auto& v, auto& k) { c.train_fraction = dbl(v, k); });
    t["stream.scenario"] = with([](auto& c, auto& v, auto&) {
      c.scenario = parse_scenario(v);
      c.scenario_set = true;
    });
    t["stream.dataset"] = with([](auto& c, auto& v, auto&) { c.dataset = v; });
    t["stream.manifest"] = with([](auto& c, auto& v, auto&) { c.manifest = v; });

    t["model.feature_dim"] = with([=](auto& c, auto& v, auto& k) { c.run.model.feature_dim = cnt(v, k); });
    t["model.hidden_dim"] = with([=](auto& c, auto& v, auto& k) { c.run.model.hidden_dim = cnt(v, k); });
    t["model.graph_dim"] = with([=](auto& c, auto& v, auto& k) { c.run.model.graph_dim = cnt(v, k); });
    t["model.backbone_layers"] = with([=](auto& c, auto& v, auto& k) { c.run.model.backbone_layers = cnt(v, k); });
    t["model.negative_slope"] = with([=](auto& c, auto& v, auto& k) { c.run.model.negative_slope = dbl(v, k); });

    t["train.mode"] = with([](auto& c, auto& v, auto&) { c.run.mode = parse_trainer_mode(v); });
    t["train.batch_size"] = with([=](auto& c, auto& v, auto& k) { c.run.batch_size = cnt(v, k); });
    t["train.seed"] = with([=](auto& c, auto& v, auto& k) { c.run.seed = cnt(v, k); });
    t["train.lr"] = with([=](auto& c, auto& v, auto& k) { c.run.adam.lr = dbl(v, k); });
    t["train.beta1"] = with([=](auto& c, auto& v, auto& k) { c.run.adam.beta1 = dbl(v, k); });
    t["train.beta2"] = with([=](auto& c, auto& v, auto& k) { c.run.adam.beta2 = dbl(v, k); });
    t["train.epsilon"] = with([=](auto& c, auto& v, auto& k) { c.run.adam.epsilon = dbl(v, k); });
    t["train.threshold"] = with([=](auto& c, auto& v, auto& k) { c.run.threshold = dbl(v, k); });
    t["train.binarize"] = with([=](auto& c, auto& v, auto& k) {
      if (v == "none") {
        c.run.normalize.binarize_threshold.reset();
      } else {
        c.run.normalize.binarize_threshold = dbl(v, k);
      }
    });
    t["train.expert"] = with([](auto& c, auto& v, auto& k) {
      if (v == "trained") {
        c.run.expert = ExpertKind::Trained;
      } else if (v == "random") {
        c.run.expert = ExpertKind::Random;
      } else {
        throw ConfigError(k + ": expected trained or random, got '" + v + "'");
      }
    });
    t["train.disable_rq"] = with([=](auto& c, auto& v, auto& k) { c.run.disable_rq = flag(v, k); });
    t["train.disable_gph"] = with([=](auto& c, auto& v, auto& k) { c.run.disable_gph = flag(v, k); });
    t["train.disable_dst"] = with([=](auto& c, auto& v, auto& k) { c.run.disable_dst = flag(v, k); });

    // Applied after the scenario is known; see from_keys.
    t["loss.preset"] = with([](auto&, auto&, auto&) {});
    t["loss.cls"] = with([=](auto& c, auto& v, auto& k) { c.run.weights.cls = dbl(v, k); });
    t["loss.dst"] = with([=](auto& c, auto& v, auto& k) { c.run.weights.dst = dbl(v, k); });
    t["loss.gph"] = with([=](auto& c, auto& v, auto& k) { c.run.weights.gph = dbl(v, k); });
    return t;
  }();
  return table;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

bool is_run_output(const fs::path& p) {
  const std::string name = p.filename().string();
  auto starts = [&](const char* s) { return name.rfind(s, 0) == 0; };
  return name == "metrics.csv" || name == "forgetting.csv" || name == "curve.csv" || name == "config.txt" ||
         name == "dataset.txt" || name == "manifest.txt" || name == "oracle_distance.csv" ||
         starts("acm_task") || starts("oracle_task") || starts("checkpoint_task");
}

// One experiment per directory: refuse a non-empty one unless forced, and then only clear
// files this tool writes.
void prepare_output(const fs::path& dir, bool force) {
  if (dir.empty()) throw ConfigError("--out is required");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("'" + dir.string() + "' is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw ConfigError("output directory '" + dir.string() + "' is not empty (use --force)");
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_run_output(entry.path())) fs::remove(entry.path());
      }
    }
  }
  fs::create_directories(dir);
}

ExperimentConfig load_options_config(const CliOptions& o) {
  if (!o.config) throw ConfigError("--config is required for '" + o.command + "'");
  return ExperimentConfig::load(*o.config);
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_keys(const KeyValueFile& kv, const fs::path& base) {
  ExperimentConfig c;
  const auto& table = setters();
  for (const auto& [key, entry] : kv.entries()) {
    auto it = table.find(key);
    if (it == table.end()) {
      throw ConfigError("unknown configuration key '" + key + "' (line " + std::to_string(entry.line) + ")");
    }
    it->second(c, entry.value, key);
  }
  if (c.source == "file") {
    if (c.dataset.empty() || c.manifest.empty()) throw ConfigError("stream.source = file needs dataset and manifest");
    if (c.dataset.is_relative()) c.dataset = base / c.dataset;
    if (c.manifest.is_relative()) c.manifest = base / c.manifest;
  } else if (!c.dataset.empty() || !c.manifest.empty()) {
    throw ConfigError("stream.dataset and stream.manifest need stream.source = file");
  }
  if (kv.has("loss.preset")) {
    const std::string p = kv.get("loss.preset");
    LossWeights w = c.run.weights;
    if (p == "split-wide") {
      w = preset_weights(Benchmark::SplitWide, c.scenario);
    } else if (p == "split-coco") {
      w = preset_weights(Benchmark::SplitCoco, c.scenario);
    } else if (p != "none") {
      throw ConfigError("loss.preset: expected none, split-wide or split-coco, got '" + p + "'");
    }
    for (const char* k : {"cls", "dst", "gph"}) {
      const std::string key = std::string("loss.") + k;
      if (!kv.has(key)) continue;
      const double v = parse_double(kv.get(key), key);
      (k[0] == 'c' ? w.cls : k[0] == 'd' ? w.dst : w.gph) = v;
    }
    c.run.weights = w;
  }
  if (!(c.train_fraction > 0 && c.train_fraction < 1)) throw ConfigError("stream.train_fraction must be in (0, 1)");
  if (c.source == "synthetic" && c.examples == 0) throw ConfigError("stream.examples must be >= 1");
  c.run.scenario = c.scenario;
  c.run.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_keys(KeyValueFile::load(path), path.parent_path());
}

std::string describe(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[stream]\nsource = " << c.source << "\n";
  if (c.source == "file") {
    out << "dataset = " << c.dataset.string() << "\nmanifest = " << c.manifest.string() << "\n";
  } else {
    const auto& p = c.chain;
    out << "examples = " << c.examples << "\nclasses = " << p.classes << "\ntasks = " << p.tasks
        << "\nfeature_dim = " << p.feature_dim << "\nchain_weight = " << format_double(p.chain_weight)
        << "\ntask_weight = " << format_double(p.task_weight) << "\nactive_prob = " << format_double(p.active_prob)
        << "\nbackground_prob = " << format_double(p.background_prob)
        << "\nmarginal_jitter = " << format_double(p.marginal_jitter) << "\nnoise = " << format_double(p.noise)
        << "\nseed = " << p.seed << "\nsplit_seed = " << c.split_seed
        << "\ntrain_fraction = " << format_double(c.train_fraction) << "\n";
  }
  out << "scenario = " << to_string(c.scenario) << "\n";
  const auto& r = c.run;
  out << "\n[model]\nfeature_dim = " << r.model.feature_dim << "\nhidden_dim = " << r.model.hidden_dim
      << "\ngraph_dim = " << r.model.graph_dim << "\nbackbone_layers = " << r.model.backbone_layers
      << "\nnegative_slope = " << format_double(r.model.negative_slope) << "\n";
  out << "\n[train]\nmode = " << to_string(r.mode) << "\nbatch_size = " << r.batch_size << "\nseed = " << r.seed
      << "\nlr = " << format_double(r.adam.lr) << "\nbeta1 = " << format_double(r.adam.beta1)
      << "\nbeta2 = " << format_double(r.adam.beta2) << "\nepsilon = " << format_double(r.adam.epsilon)
      << "\nthreshold = " << format_double(r.threshold) << "\nbinarize = "
      << (r.normalize.binarize_threshold ? format_double(*r.normalize.binarize_threshold) : std::string("none"))
      << "\nexpert = " << (r.expert == ExpertKind::Trained ? "trained" : "random")
      << "\ndisable_rq = " << (r.disable_rq ? "true" : "false")
      << "\ndisable_gph = " << (r.disable_gph ? "true" : "false")
      << "\ndisable_dst = " << (r.disable_dst ? "true" : "false") << "\n";
  out << "\n[loss]\ncls = " << format_double(r.weights.cls) << "\ndst = " << format_double(r.weights.dst)
      << "\ngph = " << format_double(r.weights.gph) << "\n";
  return out.str();
}

namespace {

Dataset synthetic_data(const ExperimentConfig& c) {
  return generate_synthetic(make_chain_spec(c.chain), c.examples, derive_seed(c.chain.seed, 7));
}

TaskStream split_synthetic(const ExperimentConfig& c, const Dataset& data) {
  return split_into_tasks(data, contiguous_partition(c.chain.classes, c.chain.tasks), c.scenario,
                          c.train_fraction, c.split_seed);
}

}  // namespace

TaskStream build_stream(const ExperimentConfig& c) {
  if (c.source == "file") {
    const Dataset data = load_dataset(c.dataset);
    TaskStream s = stream_from_manifest(data, load_manifest(c.manifest));
    if (c.scenario_set) s.set_scenario(c.scenario);
    return s;
  }
  return split_synthetic(c, synthetic_data(c));
}

GradCheckReport objective_gradcheck(std::uint64_t seed, const LossWeights& weights,
                                    const GradCheckOptions& options) {
  ChainSpecParams p;
  p.classes = 6;
  p.tasks = 2;
  p.feature_dim = 5;
  p.seed = seed;
  const Dataset data = generate_synthetic(make_chain_spec(p), 240, derive_seed(seed, 7));
  const TaskStream stream = split_into_tasks(data, contiguous_partition(6, 2), Scenario::IL, 0.7, seed);

  RunConfig rc;
  rc.scenario = Scenario::IL;
  rc.seed = seed;
  rc.weights = weights;
  rc.model = ModelConfig{5, 8, 6, 5};
  rc.threads = 1;
  std::optional<Checkpoint> first;
  RunHooks hooks;
  hooks.on_task_end = [&](const Checkpoint& cp) {
    if (!first) first = cp;
  };
  TaskStream one(Scenario::IL, {stream.task(0)}, {stream.train(0)}, {stream.test(0)}, {stream.train_source(0)},
                 {stream.test_source(0)}, 6);
  run_continual(one, rc, hooks);

  ModelState model = first->model;
  const ExpertSnapshot& expert = *first->expert;
  expand_for_task(model, 1, stream.task(1).classes.size());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < std::min<std::size_t>(6, stream.train(1).size()); ++i) rows.push_back(i);
  const Matrix x = feature_matrix(stream.train(1), rows);
  Matrix y(rows.size(), stream.task(1).classes.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < y.cols(); ++k) y(r, k) = stream.train(1)[rows[r]].has_label(stream.task(1).classes[k]);
  }
  const Prediction z = expert.forward(x);
  CoocCounters counters(3, 3);
  counters.update_hard(y);
  counters.update_soft(z.probs, y);
  const Matrix a_hat = normalize_for_gcn(augment(&*first->acm, assemble_blocks(counters, Scenario::IL), 1,
                                                 Scenario::IL).values);
  const Matrix prior = expert.features(x);

  auto params = model.parameters();
  return grad_check(params, [&](Tape& t) {
    const ForwardVars f = model_forward(t, model, x, a_hat, prior);
    LossParts parts{cls_loss(f.probs, y, 3), dst_loss(f.probs, z.probs), gph_loss(f.gph, z.gph)};
    return total_loss(weights, parts);
  }, options);
}

int cmd_generate(const CliOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig c = load_options_config(o);
    if (c.source != "synthetic") throw ConfigError("generate needs stream.source = synthetic");
    if (o.seed) c.chain.seed = *o.seed;
    const Dataset data = synthetic_data(c);
    const TaskStream s = split_synthetic(c, data);
    prepare_output(o.out, o.force);
    save_dataset(o.out / "dataset.txt", data);
    save_manifest(o.out / "manifest.txt", make_manifest(s, c.chain.feature_dim, c.split_seed, c.train_fraction));
    out << "wrote " << data.size() << " examples in " << s.num_tasks() << " tasks to " << o.out.string() << "\n";
    return int(kExitOk);
  });
}

int cmd_run(const CliOptions& o, std::ostream& out, std::ostream& err) {
  std::string last_checkpoint = "none";
  return guarded(err, [&]() -> int {
    ExperimentConfig c = load_options_config(o);
    if (o.seed) c.run.seed = *o.seed;
    const TaskStream s = build_stream(c);
    prepare_output(o.out, o.force);
    write_text(o.out / "config.txt", describe(c));
    RunHooks hooks;
    hooks.on_task_end = [&](const Checkpoint& cp) {
      const fs::path p = o.out / ("checkpoint_task" + std::to_string(cp.task + 1) + ".txt");
      save_checkpoint(p, cp);
      last_checkpoint = p.string();
    };
    RunRecord r;
    try {
      r = run(s, c.run, hooks);
    } catch (const NumericalError& e) {
      err << "numerical failure: " << e.what() << "\nlast good checkpoint: " << last_checkpoint << "\n";
      return kExitNumerical;
    }
    write_run_outputs(o.out, r);
    out << to_string(c.run.mode) << " " << to_string(c.scenario) << ": final mAP " << format_double(r.final_map());
    if (const auto f = r.map_forgetting()) out << ", mAP forgetting " << format_double(*f);
    out << "\n";
    return kExitOk;
  });
}

int cmd_oracle(const CliOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const ExperimentConfig c = load_options_config(o);
    const TaskStream s = build_stream(c);
    if (o.out.empty() || !fs::is_directory(o.out)) throw ConfigError("--out must be a completed run directory");
    std::ostringstream csv;
    csv << "task,distance\n";
    for (std::size_t t = 0; t < s.num_tasks(); ++t) {
      const fs::path dump = o.out / ("acm_task" + std::to_string(t + 1) + ".csv");
      if (!fs::exists(dump)) throw DataError("missing ACM dump '" + dump.string() + "'");
      const ACMatrix acm = load_acm(dump);
      if (acm.size() != s.num_seen(t)) {
        throw DimensionError("'" + dump.string() + "' has " + std::to_string(acm.size()) + " classes, task " +
                             std::to_string(t + 1) + " has " + std::to_string(s.num_seen(t)));
      }
      ACMatrix oracle{oracle_acm(s, t), s.num_old(t), t, Scenario::CL};
      save_acm(o.out / ("oracle_task" + std::to_string(t + 1) + ".csv"), oracle);
      const double d = acm_distance(acm.values, oracle.values);
      csv << t + 1 << ',' << format_double(d) << '\n';
    }
    write_text(o.out / "oracle_distance.csv", csv.str());
    out << csv.str();
    return kExitOk;
  });
}

int cmd_gradcheck(const CliOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    LossWeights w{0.3, 0.7, 2.0};
    std::uint64_t seed = 1;
    if (o.config) {
      const KeyValueFile kv = KeyValueFile::load(*o.config);
      const ExperimentConfig c = ExperimentConfig::from_keys(kv, o.config->parent_path());
      if (kv.has("loss.cls") || kv.has("loss.dst") || kv.has("loss.gph") || kv.has("loss.preset")) w = c.run.weights;
      seed = c.run.seed;
    }
    if (o.seed) seed = *o.seed;
    GradCheckOptions go;
    if (o.tolerance) {
      if (!(*o.tolerance > 0)) throw ConfigError("--tolerance must be positive");
      go.tolerance = *o.tolerance;
    }
    if (o.inject_fault) go.analytic_scale = 1.1;
    const GradCheckReport report = objective_gradcheck(seed, w, go);
    out << report.to_table();
    out << (report.passed() ? "PASS" : "FAIL") << "\n";
    return report.passed() ? kExitOk : kExitCheckFailed;
  });
}

int dispatch(const CliOptions& o, std::ostream& out, std::ostream& err) {
  if (o.command == "generate") return cmd_generate(o, out, err);
  if (o.command == "run") return cmd_run(o, out, err);
  if (o.command == "oracle") return cmd_oracle(o, out, err);
  if (o.command == "gradcheck") return cmd_gradcheck(o, out, err);
  err << "error: unknown command '" << o.command << "'\n";
  return kExitInputError;
}

}  // namespace mlcl
