#include "mlcl/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "mlcl/errors.hpp"
#include "mlcl/kv.hpp"
#include "mlcl/random.hpp"

namespace mlcl {

std::string to_string(TrainerMode mode) {
  switch (mode) {
    case TrainerMode::AgcnPlusPlus: return "agcn++";
    case TrainerMode::AgcnClassic: return "agcn-classic";
    case TrainerMode::FineTuning: return "fine-tuning";
    case TrainerMode::MultiTask: return "multi-task";
  }
  return "?";
}

TrainerMode parse_trainer_mode(const std::string& text) {
  if (text == "agcn++") return TrainerMode::AgcnPlusPlus;
  if (text == "agcn-classic") return TrainerMode::AgcnClassic;
  if (text == "fine-tuning") return TrainerMode::FineTuning;
  if (text == "multi-task") return TrainerMode::MultiTask;
  throw ConfigError("unknown trainer mode '" + text +
                    "' (expected agcn++, agcn-classic, fine-tuning or multi-task)");
}

void RunConfig::validate() const {
  weights.validate();
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (!(adam.lr > 0) || !std::isfinite(adam.lr)) throw ConfigError("train: lr must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ConfigError("train: Adam betas must be in [0, 1)");
  }
  if (!(adam.epsilon > 0)) throw ConfigError("train: Adam epsilon must be positive");
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("train: threshold must be in (0, 1)");
  if (normalize.binarize_threshold && !(*normalize.binarize_threshold >= 0 && *normalize.binarize_threshold <= 1)) {
    throw ConfigError("train: binarize threshold must be in [0, 1]");
  }
}

LossWeights RunConfig::effective_weights() const {
  if (mode == TrainerMode::FineTuning || mode == TrainerMode::MultiTask) return {1.0, 0.0, 0.0};
  LossWeights w = weights;
  if (disable_dst) w.dst = 0;
  if (disable_gph) w.gph = 0;
  return w;
}

double RunRecord::final_map() const {
  if (evaluations.empty()) throw StateError("run record has no evaluation");
  return evaluations.back().all.map;
}

std::optional<double> RunRecord::map_forgetting() const {
  for (const auto& f : forgetting) {
    if (f.metric == "mAP") return f.report.average;
  }
  return std::nullopt;
}

namespace {

GraphMode graph_for(TrainerMode mode) {
  switch (mode) {
    case TrainerMode::AgcnPlusPlus:
    case TrainerMode::MultiTask: return GraphMode::Dynamic;
    case TrainerMode::AgcnClassic: return GraphMode::Static;
    case TrainerMode::FineTuning: return GraphMode::None;
  }
  return GraphMode::None;
}

ModelConfig model_config_for(const TaskStream& stream, const RunConfig& config) {
  ModelConfig mc = config.model;
  if (stream.num_tasks() == 0 || stream.train(0).empty()) throw DataError("stream has no training data");
  mc.input_dim = stream.train(0).front().features.size();
  mc.graph = graph_for(config.mode);
  mc.seed = derive_seed(config.seed, 1);
  mc.validate();
  return mc;
}

Matrix indicator_rows(const Dataset& data, std::span<const std::size_t> rows,
                      const std::vector<std::size_t>& classes) {
  Matrix out(rows.size(), classes.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const LabeledExample& ex = data[rows[r]];
    for (std::size_t c = 0; c < classes.size(); ++c) out(r, c) = ex.has_label(classes[c]) ? 1.0 : 0.0;
  }
  return out;
}

void check_labels(const Dataset& data, const TaskStream& stream, std::size_t t) {
  const auto& own = stream.task(t).classes;
  for (const auto& ex : data) {
    if (ex.labels.empty()) throw DataError("task " + std::to_string(t + 1) + ": example without labels");
    for (std::size_t l : ex.labels) {
      if (l >= stream.total_classes()) {
        throw DataError("task " + std::to_string(t + 1) + ": label " + std::to_string(l) +
                        " outside the label space");
      }
    }
    if (std::none_of(own.begin(), own.end(), [&](std::size_t c) { return ex.has_label(c); })) {
      throw DataError("task " + std::to_string(t + 1) + ": example has no label of its own task");
    }
  }
}

void apply_adam(Tape& tape, AdamState& adam) {
  std::vector<std::pair<Parameter*, const Matrix*>> updates;
  for (auto& [p, v] : tape.bound_parameters()) updates.emplace_back(p, &v.grad());
  adam.step(updates);
}

MetricReport evaluate_columns(const Matrix& scores, const Dataset& data, std::size_t col_begin,
                              const std::vector<std::size_t>& classes, double threshold) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Matrix truth = indicator_rows(data, rows, classes);
  return evaluate(scores.slice_cols(col_begin, col_begin + classes.size()), truth, threshold);
}

std::size_t resolve_threads(const RunConfig& config) {
  return config.threads > 0 ? config.threads : evaluation_threads(std::thread::hardware_concurrency());
}

// Evaluation sweep after task l over every seen test set.
TaskEvaluation evaluate_after(const ModelState& model, const ExpertSnapshot* expert, const Matrix& a_hat,
                              const TaskStream& stream, std::size_t l, const RunConfig& config) {
  const std::size_t threads = resolve_threads(config);
  TaskEvaluation ev;
  ev.after_task = l;
  Dataset all;
  Matrix all_scores;
  for (std::size_t j = 0; j <= l; ++j) {
    const Dataset& test = stream.test(j);
    if (test.empty()) throw DataError("task " + std::to_string(j + 1) + " has an empty test set");
    const Matrix scores = predict_dataset(model, expert, a_hat, test, threads);
    ev.splits.push_back(
        evaluate_columns(scores, test, stream.num_old(j), stream.task(j).classes, config.threshold));
    all.insert(all.end(), test.begin(), test.end());
    all_scores.append_rows(scores);
  }
  ev.all = evaluate_columns(all_scores, all, 0, stream.seen_classes(l), config.threshold);
  return ev;
}

void record_history(RunRecord& rec, const TaskEvaluation& ev) {
  for (std::size_t j = 0; j < ev.splits.size(); ++j) {
    rec.map_history.set(ev.after_task, j, ev.splits[j].map);
    rec.cf1_history.set(ev.after_task, j, ev.splits[j].cf1);
    rec.of1_history.set(ev.after_task, j, ev.splits[j].of1);
  }
}

void finish_forgetting(RunRecord& rec, std::size_t tasks) {
  if (tasks < 2) return;
  rec.forgetting.push_back({"mAP", forgetting(rec.map_history, tasks - 1)});
  rec.forgetting.push_back({"CF1", forgetting(rec.cf1_history, tasks - 1)});
  rec.forgetting.push_back({"OF1", forgetting(rec.of1_history, tasks - 1)});
}

}  // namespace

std::size_t evaluation_threads(std::size_t cap) {
  std::size_t n = std::max<unsigned>(std::thread::hardware_concurrency(), 1u);
  if (const char* env = std::getenv("MLCL_THREADS"); env && *env) {
    const std::size_t v = parse_count(env, "MLCL_THREADS");
    if (v == 0) throw ConfigError("MLCL_THREADS must be >= 1");
    n = v;
  }
  return std::max<std::size_t>(1, std::min(n, std::max<std::size_t>(cap, 1)));
}

Matrix predict_dataset(const ModelState& model, const ExpertSnapshot* expert, const Matrix& a_hat,
                       const Dataset& data, std::size_t threads) {
  constexpr std::size_t kChunk = 128;
  Matrix out(data.size(), model.num_classes());
  const std::size_t chunks = (data.size() + kChunk - 1) / kChunk;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t c = next++; c < chunks && !failed; c = next++) {
      try {
        std::vector<std::size_t> rows;
        for (std::size_t i = c * kChunk; i < std::min(data.size(), (c + 1) * kChunk); ++i) rows.push_back(i);
        const Matrix p = predict_batch(model, expert, a_hat, feature_matrix(data, rows)).probs;
        for (std::size_t r = 0; r < rows.size(); ++r) {
          std::copy(p.row(r).begin(), p.row(r).end(), out.row(rows[r]).begin());
        }
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, chunks));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

ACMatrix train_task(ModelState& model, const ExpertSnapshot* expert, const ACMatrix* prev_acm,
                    const TaskStream& stream, std::size_t t, const RunConfig& config, AdamState& adam,
                    const RunHooks& hooks) {
  config.validate();
  if (config.scenario != stream.scenario()) {
    throw DataError("run scenario " + to_string(config.scenario) + " but the stream is " +
                    to_string(stream.scenario()));
  }
  const std::size_t m = stream.num_old(t), n = stream.task(t).classes.size();
  if (model.num_classes() != m + n || model.old_classes() != m) {
    throw StateError("model has " + std::to_string(model.num_classes()) + " classes, task " +
                     std::to_string(t + 1) + " needs " + std::to_string(m + n));
  }
  if ((t > 0) != (expert != nullptr)) throw StateError("an expert is required exactly from the second task on");
  const GraphMode graph = model.config().graph;
  const bool has_graph = graph != GraphMode::None;
  if (has_graph && t > 0 && (!prev_acm || prev_acm->size() != m)) {
    throw StateError("task " + std::to_string(t + 1) + " needs the previous ACM over " + std::to_string(m) +
                     " classes");
  }

  const Dataset& data = stream.train(t);
  if (data.empty()) throw DataError("task " + std::to_string(t + 1) + " has no training data");
  check_labels(data, stream, t);
  const Scenario sc = config.scenario;
  const std::vector<std::size_t> cls_classes = sc == Scenario::IL ? stream.task(t).classes : stream.seen_classes(t);
  const std::size_t cls_begin = sc == Scenario::IL ? m : 0;
  const LossWeights w = config.effective_weights();
  const bool use_dst = t > 0 && w.dst > 0;
  const bool use_gph = t > 0 && w.gph > 0 && has_graph;

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(config.seed, 1000 + t));
  rng.shuffle(order);

  CoocCounters counters(m, n);
  ACMatrix acm;
  for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
    const std::span<const std::size_t> rows(order.data() + begin,
                                            std::min(config.batch_size, order.size() - begin));
    const Matrix x = feature_matrix(data, rows);
    const Matrix y = indicator_rows(data, rows, cls_classes);

    Prediction z;
    Matrix prior;
    if (expert) {
      if (use_dst || use_gph || (has_graph && sc == Scenario::IL)) {
        z = expert->forward(x);
        if (!z.probs.all_finite() || !z.gph.all_finite()) {
          throw NumericalError("expert output is not finite at task " + std::to_string(t + 1) + ", batch " +
                               std::to_string(begin / config.batch_size + 1));
        }
      }
      if (graph == GraphMode::Dynamic) prior = expert->features(x);
    }

    Matrix a_hat;
    if (has_graph) {
      counters.update_hard(y);
      if (sc == Scenario::IL && t > 0) counters.update_soft(z.probs, y);
      AcmBlocks blocks = assemble_blocks(counters, sc);
      if (config.disable_rq) blocks = without_inter_task(std::move(blocks));
      acm = augment(t > 0 ? prev_acm : nullptr, blocks, t, sc);
      a_hat = normalize_for_gcn(acm.values, config.normalize);
    }

    Tape tape;
    const ForwardVars f = model_forward(tape, model, x, a_hat, prior);
    LossParts parts;
    parts.cls = cls_loss(f.probs, y, cls_begin);
    if (use_dst) parts.dst = dst_loss(f.probs, z.probs);
    if (use_gph) parts.gph = gph_loss(f.gph, z.gph);
    const Var loss = total_loss(w, parts);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      throw NumericalError("non-finite loss at task " + std::to_string(t + 1) + ", batch " +
                           std::to_string(begin / config.batch_size + 1));
    }
    tape.backward(loss);
    apply_adam(tape, adam);

    if (hooks.on_batch) {
      BatchTrace tr;
      tr.task = t;
      tr.examples.assign(rows.begin(), rows.end());
      tr.cls_classes = cls_classes;
      tr.cls_targets = y;
      if (use_dst) {
        const auto old = stream.seen_classes(t);
        tr.dst_classes.assign(old.begin(), old.begin() + static_cast<std::ptrdiff_t>(m));
        tr.dst_targets = z.probs;
      }
      tr.gph_term = use_gph;
      tr.expert_checksum = expert ? checksum(expert->model()) : 0;
      tr.loss = value;
      hooks.on_batch(tr);
    }
  }
  return acm;
}

RunRecord run_continual(const TaskStream& stream, const RunConfig& config, const RunHooks& hooks) {
  config.validate();
  if (config.mode == TrainerMode::MultiTask) throw ConfigError("multi-task mode is not a continual run");
  const std::size_t T = stream.num_tasks();
  RunRecord rec;
  rec.mode = config.mode;
  rec.scenario = config.scenario;
  rec.map_history = HistoryMatrix(T);
  rec.cf1_history = HistoryMatrix(T);
  rec.of1_history = HistoryMatrix(T);

  ModelState model = ModelState::create(model_config_for(stream, config), stream.task(0).classes.size());
  const bool has_graph = model.config().graph != GraphMode::None;
  AdamState adam(config.adam);
  std::optional<ExpertSnapshot> expert;  // the model after the previous task (or its stand-in)
  std::optional<ACMatrix> prev_acm;
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) expand_for_task(model, t, stream.task(t).classes.size());
    const ExpertSnapshot* ex = expert ? &*expert : nullptr;
    ACMatrix acm = train_task(model, ex, prev_acm ? &*prev_acm : nullptr, stream, t, config, adam, hooks);
    const Matrix a_hat = has_graph ? normalize_for_gcn(acm.values, config.normalize) : Matrix();

    const TaskEvaluation ev = evaluate_after(model, ex, a_hat, stream, t, config);
    record_history(rec, ev);
    rec.evaluations.push_back(ev);
    rec.expert_checksums.push_back(ex ? checksum(ex->model()) : 0);
    if (has_graph) rec.acms.push_back(acm);

    if (t + 1 < T || hooks.on_task_end) {
      std::optional<Backbone> fed_old;
      if (ex && model.config().graph == GraphMode::Dynamic) fed_old = ex->model().backbone;
      ExpertSnapshot snap(model, std::move(fed_old), has_graph ? acm : ACMatrix{}, config.normalize);
      if (hooks.on_task_end) {
        Checkpoint cp{model, snap, has_graph ? std::optional<ACMatrix>(acm) : std::nullopt,
                      stream.seen_classes(t), t};
        hooks.on_task_end(cp);
      }
      if (config.expert == ExpertKind::Random) snap = random_expert_like(snap, derive_seed(config.seed, 2000 + t));
      expert = std::move(snap);
    }
    if (has_graph) prev_acm = std::move(acm);
  }
  finish_forgetting(rec, T);
  return rec;
}

RunRecord run_finetuning(const TaskStream& stream, RunConfig config, const RunHooks& hooks) {
  config.mode = TrainerMode::FineTuning;
  return run_continual(stream, config, hooks);
}

RunRecord run_multitask(const TaskStream& stream, RunConfig config, const RunHooks& hooks) {
  config.mode = TrainerMode::MultiTask;
  config.validate();
  const std::size_t T = stream.num_tasks();
  const std::vector<std::size_t> classes = stream.seen_classes(T - 1);
  Dataset train, test;
  for (std::size_t t = 0; t < T; ++t) {
    check_labels(stream.train(t), stream, t);
    train.insert(train.end(), stream.train(t).begin(), stream.train(t).end());
    test.insert(test.end(), stream.test(t).begin(), stream.test(t).end());
  }
  if (train.empty() || test.empty()) throw DataError("multi-task run needs training and test data");

  ModelState model = ModelState::create(model_config_for(stream, config), classes.size());
  AdamState adam(config.adam);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(config.seed, 1000));
  rng.shuffle(order);

  CoocCounters counters(0, classes.size());
  ACMatrix acm;
  Matrix a_hat;
  for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
    const std::span<const std::size_t> rows(order.data() + begin,
                                            std::min(config.batch_size, order.size() - begin));
    const Matrix x = feature_matrix(train, rows);
    const Matrix y = indicator_rows(train, rows, classes);
    counters.update_hard(y);
    acm = augment(nullptr, assemble_blocks(counters, Scenario::CL), 0, Scenario::CL);
    a_hat = normalize_for_gcn(acm.values, config.normalize);
    Tape tape;
    const ForwardVars f = model_forward(tape, model, x, a_hat, Matrix());
    const Var loss = total_loss(config.effective_weights(), {cls_loss(f.probs, y, 0), Var(), Var()});
    if (!std::isfinite(loss.value()(0, 0))) {
      throw NumericalError("non-finite loss at batch " + std::to_string(begin / config.batch_size + 1));
    }
    tape.backward(loss);
    apply_adam(tape, adam);
    if (hooks.on_batch) {
      BatchTrace tr;
      tr.examples.assign(rows.begin(), rows.end());
      tr.cls_classes = classes;
      tr.cls_targets = y;
      tr.loss = loss.value()(0, 0);
      hooks.on_batch(tr);
    }
  }

  RunRecord rec;
  rec.mode = TrainerMode::MultiTask;
  rec.scenario = config.scenario;
  TaskEvaluation ev;
  ev.after_task = T - 1;
  const Matrix scores = predict_dataset(model, nullptr, a_hat, test, resolve_threads(config));
  ev.all = evaluate_columns(scores, test, 0, classes, config.threshold);
  rec.evaluations.push_back(ev);
  rec.acms.push_back(acm);
  if (hooks.on_task_end) hooks.on_task_end(Checkpoint{model, std::nullopt, acm, classes, 0});
  return rec;
}

RunRecord run(const TaskStream& stream, const RunConfig& config, const RunHooks& hooks) {
  switch (config.mode) {
    case TrainerMode::MultiTask: return run_multitask(stream, config, hooks);
    case TrainerMode::FineTuning: return run_finetuning(stream, config, hooks);
    default: return run_continual(stream, config, hooks);
  }
}

// ---- reports ----

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void metric_row(std::ostringstream& out, std::size_t task, const std::string& split, const MetricReport& r) {
  out << task + 1 << ',' << split << ',' << fixed(r.map) << ',' << fixed(r.cp) << ',' << fixed(r.cr) << ','
      << fixed(r.cf1) << ',' << fixed(r.op) << ',' << fixed(r.orc) << ',' << fixed(r.of1) << '\n';
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

}  // namespace

std::string format_metrics_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "task,split,mAP,CP,CR,CF1,OP,OR,OF1\n";
  for (const auto& ev : record.evaluations) {
    for (std::size_t j = 0; j < ev.splits.size(); ++j) metric_row(out, ev.after_task, std::to_string(j + 1), ev.splits[j]);
    metric_row(out, ev.after_task, "all", ev.all);
  }
  return out.str();
}

std::string format_forgetting_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "metric,split,forgetting\n";
  for (const auto& f : record.forgetting) {
    for (std::size_t j = 0; j < f.report.per_task.size(); ++j) {
      out << f.metric << ',' << j + 1 << ',' << fixed(f.report.per_task[j]) << '\n';
    }
    out << f.metric << ",mean," << fixed(f.report.average) << '\n';
  }
  return out.str();
}

std::string format_curve_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "task,mAP_seen\n";
  for (const auto& ev : record.evaluations) out << ev.after_task + 1 << ',' << fixed(ev.all.map) << '\n';
  return out.str();
}

void write_run_outputs(const std::filesystem::path& dir, const RunRecord& record) {
  std::filesystem::create_directories(dir);
  write_text(dir / "metrics.csv", format_metrics_csv(record));
  write_text(dir / "forgetting.csv", format_forgetting_csv(record));
  write_text(dir / "curve.csv", format_curve_csv(record));
  for (const auto& acm : record.acms) {
    save_acm(dir / ("acm_task" + std::to_string(acm.task + 1) + ".csv"), acm);
  }
}

}  // namespace mlcl
