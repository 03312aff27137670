// One PASS/FAIL line per acceptance criterion. Exit status is non-zero if any fails.
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "metric_oracle.hpp"
#include "mlcl/acm.hpp"
#include "mlcl/cli.hpp"
#include "mlcl/metrics.hpp"
#include "mlcl/random.hpp"
#include "mlcl/trainer.hpp"

using namespace mlcl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ExperimentConfig desk_config(std::uint64_t seed) {
  ExperimentConfig c = ExperimentConfig::load(MLCL_DESK_CONFIG);
  c.chain.seed = seed;
  c.split_seed = seed;
  c.run.seed = seed;
  return c;
}

// Runs shared between criteria.
struct DeskRuns {
  std::vector<TaskStream> streams;
  std::vector<RunRecord> full, finetune, no_rq, no_gph, random_expert;
  double seconds = 0;
  double compared_seconds = 0;  // AGCN++ and fine-tuning only
};

// Leading principal block of every ACM equals the previous ACM bit for bit.
bool nested(const std::vector<ACMatrix>& acms, std::string& why) {
  for (std::size_t t = 1; t < acms.size(); ++t) {
    const Matrix& prev = acms[t - 1].values;
    const Matrix& cur = acms[t].values;
    if (acms[t].boundary != prev.rows()) {
      why = fmt("task %zu boundary %zu != %zu", t + 1, acms[t].boundary, prev.rows());
      return false;
    }
    for (std::size_t i = 0; i < prev.rows(); ++i) {
      for (std::size_t j = 0; j < prev.cols(); ++j) {
        if (std::bit_cast<std::uint64_t>(prev(i, j)) != std::bit_cast<std::uint64_t>(cur(i, j))) {
          why = fmt("task %zu entry (%zu,%zu)", t + 1, i, j);
          return false;
        }
      }
    }
  }
  return true;
}

TaskStream cl_stream_10k() {
  ChainSpecParams p;
  p.classes = 12;
  p.tasks = 4;
  p.seed = 11;
  const CooccurrenceSpec spec = make_chain_spec(p);
  const LabelSampler sampler(spec);
  // Smallest dataset whose train splits hold exactly 10,000 examples.
  for (std::size_t n = 14280;; ++n) {
    const Dataset data = generate_synthetic(spec, sampler, n, 12);
    TaskStream s = split_into_tasks(data, contiguous_partition(12, 4), Scenario::CL, 0.7, 13);
    std::size_t train = 0;
    for (std::size_t t = 0; t < s.num_tasks(); ++t) train += s.train(t).size();
    if (train == 10000) return s;
    if (train > 10000) throw std::runtime_error("no dataset size gives 10000 train examples");
  }
}

Outcome criterion1(std::vector<ACMatrix>& cl_acms) {
  const TaskStream stream = cl_stream_10k();
  RunConfig c;
  c.scenario = Scenario::CL;
  c.model = ModelConfig{0, 8, 8, 8};
  c.seed = 3;
  const auto t0 = Clock::now();
  const RunRecord r = run(stream, c);
  const double secs = seconds_since(t0);
  double worst = 0;
  for (std::size_t t = 0; t < stream.num_tasks(); ++t) {
    worst = std::max(worst, acm_distance(r.acms.at(t).values, oracle_acm(stream, t)));
  }
  cl_acms = r.acms;
  return {worst < 1e-12 && secs < 10.0,
          fmt("max distance %.3g over %zu tasks (< 1e-12), %.2f s (< 10 s)", worst, stream.num_tasks(), secs)};
}

Outcome criterion2(const std::vector<ACMatrix>& cl_acms, const DeskRuns& d) {
  std::size_t checked = 0;
  std::string why;
  auto all = [&](const std::vector<RunRecord>& runs, const char* name) {
    for (std::size_t s = 0; s < runs.size(); ++s) {
      if (!nested(runs[s].acms, why)) {
        why = fmt("%s seed %zu: %s", name, s + 1, why.c_str());
        return false;
      }
      checked += runs[s].acms.size() - 1;
    }
    return true;
  };
  const bool ok = nested(cl_acms, why) && (checked += cl_acms.size() - 1, true) && all(d.full, "agcn++") &&
                  all(d.no_rq, "noRQ") && all(d.no_gph, "lambda3=0") && all(d.random_expert, "random expert");
  return {ok, ok ? fmt("%zu task transitions bit-identical", checked) : why};
}

Outcome criterion3() {
  GradCheckOptions o;
  o.tolerance = 1e-4;
  const auto t0 = Clock::now();
  const GradCheckReport r = objective_gradcheck(1, LossWeights{0.3, 0.7, 2.0}, o);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::size_t entries = 0;
  for (const auto& p : r.parameters) {
    worst = std::max(worst, p.max_relative_error);
    entries += p.entries;
  }
  return {r.passed() && secs < 60.0,
          fmt("%zu parameters, %zu entries, max relative error %.3g (<= 1e-4), %.2f s (< 60 s)",
              r.parameters.size(), entries, worst, secs)};
}

Outcome criterion4() {
  Rng rng(404);
  double worst = 0;
  for (int b = 0; b < 200; ++b) {
    const std::size_t n = 1 + rng.below(500);
    const std::size_t c = 1 + rng.below(20);
    const double density = rng.uniform(0.02, 0.6);
    const bool coarse = rng.below(2) == 0;  // many tied scores
    Matrix s(n, c), y(n, c);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        s(i, k) = coarse ? static_cast<double>(rng.below(6)) / 5.0 : rng.uniform();
        y(i, k) = rng.uniform() < density ? 1.0 : 0.0;
      }
    }
    y(rng.below(n), rng.below(c)) = 1.0;
    const double thr = rng.uniform(0.2, 0.8);
    const oracle::All o = oracle::brute_all(s, y, thr);
    const PrfMetrics p = prf_metrics(s, y, thr);
    const double got[] = {mean_average_precision(s, y), p.cp, p.cr, p.cf1, p.op, p.orc, p.of1};
    const double want[] = {o.map, o.cp, o.cr, o.cf1, o.op, o.orc, o.of1};
    for (int k = 0; k < 7; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
  }
  Matrix truth(2, 2), pred(2, 2);
  truth(0, 0) = 1; truth(1, 0) = 1; truth(1, 1) = 1;
  pred(0, 0) = 1; pred(0, 1) = 1; pred(1, 1) = 1;
  const PrfMetrics h = prf_metrics(pred, truth, 0.5);
  const bool hand = h.op == 2.0 / 3 && h.orc == 2.0 / 3 && h.of1 == 2.0 / 3 && h.cp == 0.75 && h.cr == 0.75 &&
                    h.cf1 == 0.75;
  return {worst <= 1e-9 && hand,
          fmt("200 batches max |diff| %.3g (<= 1e-9); hand example OP=%.17g OR=%.17g CP=%.17g CR=%.17g", worst, h.op,
              h.orc, h.cp, h.cr)};
}

Outcome criterion5() {
  HistoryMatrix flat(4);
  for (std::size_t l = 0; l < 4; ++l) {
    for (std::size_t j = 0; j <= l; ++j) flat.set(l, j, 0.55);
  }
  const ForgettingReport f0 = forgetting(flat, 3);
  HistoryMatrix two(2);
  two.set(0, 0, 0.8);
  two.set(1, 0, 0.6);
  two.set(1, 1, 0.7);
  const ForgettingReport f2 = forgetting(two, 1);
  const double expected = 0.8 - 0.6;
  const bool ok = f0.average == 0.0 && f2.average == expected && std::abs(f2.average - 0.2) <= 1e-15;
  return {ok, fmt("constant history %.17g; a11=0.8 a21=0.6 gives %.17g", f0.average, f2.average)};
}

DeskRuns desk_runs() {
  DeskRuns d;
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ExperimentConfig c = desk_config(seed);
    d.streams.push_back(build_stream(c));
    const TaskStream& s = d.streams.back();
    const auto t1 = Clock::now();
    d.full.push_back(run(s, c.run));
    RunConfig ft = c.run;
    ft.mode = TrainerMode::FineTuning;
    d.finetune.push_back(run(s, ft));
    d.compared_seconds += seconds_since(t1);
    RunConfig rq = c.run;
    rq.disable_rq = true;
    d.no_rq.push_back(run(s, rq));
    RunConfig g = c.run;
    g.weights.gph = 0;
    d.no_gph.push_back(run(s, g));
    if (seed <= 3) {
      RunConfig re = c.run;
      re.expert = ExpertKind::Random;
      d.random_expert.push_back(run(s, re));
    }
  }
  d.seconds = seconds_since(t0);
  return d;
}

double mean_of(const std::vector<RunRecord>& runs, const std::function<double(const RunRecord&)>& f) {
  double sum = 0;
  for (const auto& r : runs) sum += f(r);
  return sum / static_cast<double>(runs.size());
}

double final_map(const RunRecord& r) { return r.final_map(); }
double map_forgetting(const RunRecord& r) { return r.map_forgetting().value(); }

Outcome criterion6(const DeskRuns& d) {
  const double secs = d.compared_seconds;
  const double am = mean_of(d.full, final_map), fm = mean_of(d.finetune, final_map);
  const double af = mean_of(d.full, map_forgetting), ff = mean_of(d.finetune, map_forgetting);
  return {am > fm && af < ff && secs < 300,
          fmt("final mAP %.3f vs fine-tuning %.3f; mAP forgetting %.3f vs %.3f; %.1f s for 5 seeds (< 300 s)", am,
              fm, af, ff, secs)};
}

Outcome criterion7(const DeskRuns& d) {
  const double full = mean_of(d.full, final_map), no_rq = mean_of(d.no_rq, final_map);
  const double f_full = mean_of(d.full, map_forgetting), f_zero = mean_of(d.no_gph, map_forgetting);
  return {no_rq <= full && f_zero >= f_full,
          fmt("final mAP noRQ %.3f <= full %.3f: %s; forgetting lambda3=0 %.3f >= lambda3=%.2g %.3f: %s", no_rq, full,
              no_rq <= full ? "yes" : "no", f_zero, desk_config(1).run.weights.gph, f_full,
              f_zero >= f_full ? "yes" : "no")};
}

Outcome criterion8(const DeskRuns& d) {
  std::string detail;
  bool ok = true;
  for (std::size_t s = 0; s < d.random_expert.size(); ++s) {
    const TaskStream& stream = d.streams[s];
    for (std::size_t t = 1; t < stream.num_tasks(); ++t) {
      const Matrix oracle = oracle_acm(stream, t);
      const double trained = acm_distance(d.full[s].acms.at(t).values, oracle);
      const double random = acm_distance(d.random_expert[s].acms.at(t).values, oracle);
      if (!(trained < random)) {
        ok = false;
        detail += fmt(" seed %zu task %zu: %.4f >= %.4f;", s + 1, t + 1, trained, random);
      }
      if (t == stream.num_tasks() - 1) {
        detail += fmt(" seed %zu last task %.4f vs %.4f;", s + 1, trained, random);
      }
    }
  }
  return {ok, "trained vs random distance" + detail};
}

Outcome criterion9(const DeskRuns& d) {
  const RunRecord again = run(d.streams[0], desk_config(1).run);
  const RunRecord& first = d.full[0];
  bool same = format_metrics_csv(again) == format_metrics_csv(first) &&
              format_forgetting_csv(again) == format_forgetting_csv(first) &&
              format_curve_csv(again) == format_curve_csv(first) && again.acms.size() == first.acms.size();
  for (std::size_t t = 0; same && t < first.acms.size(); ++t) same = format_acm(again.acms[t]) == format_acm(first.acms[t]);
  return {same, same ? "metrics, forgetting, curve and every ACM dump byte-identical" : "outputs differ"};
}

Outcome criterion10(const DeskRuns& d) {
  std::size_t batches = 0;
  std::string why;
  // IL: classification targets only over C^t; distillation targets are the expert's own
  // probabilities, recomputed here from the snapshot handed out at the previous task end.
  {
    const TaskStream& stream = d.streams[0];
    std::vector<ExpertSnapshot> experts;
    RunHooks hooks;
    hooks.on_task_end = [&](const Checkpoint& cp) { experts.push_back(*cp.expert); };
    hooks.on_batch = [&](const BatchTrace& b) {
      ++batches;
      if (!why.empty()) return;
      const auto& own = stream.task(b.task).classes;
      if (b.cls_classes != own) why = fmt("IL task %zu: classification over other classes", b.task + 1);
      const Matrix x = feature_matrix(stream.train(b.task), b.examples);
      for (std::size_t r = 0; r < b.examples.size() && why.empty(); ++r) {
        const auto& ex = stream.train(b.task)[b.examples[r]];
        for (std::size_t k = 0; k < own.size(); ++k) {
          if (b.cls_targets(r, k) != (ex.has_label(own[k]) ? 1.0 : 0.0)) why = "IL target mismatch";
        }
      }
      if (b.task == 0) {
        if (!b.dst_classes.empty() || b.gph_term) why = "IL first task has distillation terms";
        return;
      }
      const auto old = stream.seen_classes(b.task - 1);
      if (b.dst_classes != old) {
        why = fmt("IL task %zu: distillation classes differ from C_seen^{t-1}", b.task + 1);
        return;
      }
      const Matrix z = experts.at(b.task - 1).forward(x).probs;
      for (std::size_t i = 0; i < z.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(z[i]) != std::bit_cast<std::uint64_t>(b.dst_targets[i])) {
          why = fmt("IL task %zu: distillation target is not the expert prediction", b.task + 1);
          return;
        }
      }
    };
    run(stream, desk_config(1).run, hooks);
  }
  const std::size_t il_batches = batches;
  // CL: classification spans every seen class.
  {
    ExperimentConfig c = desk_config(1);
    c.scenario = c.run.scenario = Scenario::CL;
    const TaskStream stream = build_stream(c);
    RunHooks hooks;
    hooks.on_batch = [&](const BatchTrace& b) {
      ++batches;
      if (why.empty() && b.cls_classes != stream.seen_classes(b.task)) {
        why = fmt("CL task %zu: classification does not span C_seen^t", b.task + 1);
      }
    };
    run(stream, c.run, hooks);
  }
  return {why.empty(), why.empty() ? fmt("%zu IL and %zu CL batches checked", il_batches, batches - il_batches) : why};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int k, const Outcome& o) {
    std::printf("criterion %2d: %s  %s\n", k, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  };
  auto guarded = [&](int k, const std::function<Outcome()>& f) {
    try {
      report(k, f());
    } catch (const std::exception& e) {
      report(k, {false, std::string("exception: ") + e.what()});
    }
  };

  std::vector<ACMatrix> cl_acms;
  guarded(1, [&] { return criterion1(cl_acms); });
  DeskRuns desk;
  bool have_desk = true;
  try {
    desk = desk_runs();
  } catch (const std::exception& e) {
    have_desk = false;
    std::printf("desk runs failed: %s\n", e.what());
  }
  auto needs_desk = [&](int k, const std::function<Outcome()>& f) {
    if (!have_desk) return report(k, {false, "desk runs unavailable"});
    guarded(k, f);
  };
  needs_desk(2, [&] { return criterion2(cl_acms, desk); });
  guarded(3, criterion3);
  guarded(4, criterion4);
  guarded(5, criterion5);
  needs_desk(6, [&] { return criterion6(desk); });
  needs_desk(7, [&] { return criterion7(desk); });
  needs_desk(8, [&] { return criterion8(desk); });
  needs_desk(9, [&] { return criterion9(desk); });
  needs_desk(10, [&] { return criterion10(desk); });
  if (have_desk) std::printf("desk runs: %.1f s\n", desk.seconds);
  std::printf("%d of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
