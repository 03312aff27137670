#include "mlcl/stream.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mlcl/errors.hpp"
#include "mlcl/random.hpp"

namespace mlcl {

bool LabeledExample::has_label(std::size_t c) const {
  return std::binary_search(labels.begin(), labels.end(), c);
}

std::string to_string(Scenario s) { return s == Scenario::IL ? "IL" : "CL"; }

Scenario parse_scenario(const std::string& text) {
  if (text == "IL" || text == "il") return Scenario::IL;
  if (text == "CL" || text == "cl") return Scenario::CL;
  throw ConfigError("unknown scenario '" + text + "' (expected IL or CL)");
}

namespace {

constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();

std::vector<std::size_t> class_to_task(const std::vector<std::vector<std::size_t>>& partition) {
  std::size_t max_class = 0;
  for (const auto& set : partition) {
    for (std::size_t c : set) max_class = std::max(max_class, c);
  }
  std::vector<std::size_t> owner(max_class + 1, kUnassigned);
  for (std::size_t t = 0; t < partition.size(); ++t) {
    for (std::size_t c : partition[t]) {
      if (owner[c] != kUnassigned) {
        throw DataError("class " + std::to_string(c) + " appears in task " +
                        std::to_string(owner[c] + 1) + " and task " + std::to_string(t + 1));
      }
      owner[c] = t;
    }
  }
  return owner;
}

}  // namespace

std::vector<std::size_t> assign_to_tasks(const Dataset& data,
                                         const std::vector<std::vector<std::size_t>>& partition) {
  if (partition.empty()) throw DataError("assign_to_tasks: empty partition");
  const std::vector<std::size_t> owner = class_to_task(partition);
  std::vector<std::size_t> assignment(data.size(), kUnassigned);
  std::vector<std::vector<std::size_t>> eligible(data.size());
  std::vector<std::size_t> counts(partition.size(), 0);
  for (std::size_t e = 0; e < data.size(); ++e) {
    if (data[e].labels.empty()) throw DataError("example " + std::to_string(e) + " has no labels");
    for (std::size_t c : data[e].labels) {
      if (c >= owner.size() || owner[c] == kUnassigned) {
        throw DataError("example " + std::to_string(e) + ": label " + std::to_string(c) +
                        " belongs to no task class set");
      }
      eligible[e].push_back(owner[c]);
    }
    std::sort(eligible[e].begin(), eligible[e].end());
    eligible[e].erase(std::unique(eligible[e].begin(), eligible[e].end()), eligible[e].end());
    if (eligible[e].size() == 1) {
      assignment[e] = eligible[e].front();
      ++counts[assignment[e]];
    }
  }
  for (std::size_t e = 0; e < data.size(); ++e) {
    if (assignment[e] != kUnassigned) continue;
    std::size_t best = eligible[e].front();
    for (std::size_t t : eligible[e]) {
      if (counts[t] < counts[best]) best = t;
    }
    assignment[e] = best;
    ++counts[best];
  }
  return assignment;
}

TaskStream::TaskStream(Scenario scenario, std::vector<TaskSpec> tasks, std::vector<Dataset> train,
                       std::vector<Dataset> test, std::vector<std::vector<std::size_t>> train_source,
                       std::vector<std::vector<std::size_t>> test_source, std::size_t total_classes)
    : scenario_(scenario),
      tasks_(std::move(tasks)),
      train_(std::move(train)),
      test_(std::move(test)),
      train_source_(std::move(train_source)),
      test_source_(std::move(test_source)),
      total_classes_(total_classes) {
  if (train_.size() != tasks_.size() || test_.size() != tasks_.size() ||
      train_source_.size() != tasks_.size() || test_source_.size() != tasks_.size()) {
    throw DataError("TaskStream: per-task lists disagree with the task count");
  }
  std::vector<std::vector<std::size_t>> partition;
  for (const auto& t : tasks_) {
    if (t.classes.empty()) throw DataError("TaskStream: task " + std::to_string(t.index + 1) + " has no classes");
    partition.push_back(t.classes);
  }
  const auto owner = class_to_task(partition);
  if (owner.size() > total_classes_) {
    throw DataError("TaskStream: class index beyond total class count");
  }
}

std::size_t TaskStream::num_old(std::size_t t) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < t; ++i) n += tasks_.at(i).classes.size();
  return n;
}

std::vector<std::size_t> TaskStream::seen_classes(std::size_t t) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i <= t; ++i) {
    const auto& c = tasks_.at(i).classes;
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

TaskStream split_into_tasks(const Dataset& data,
                            const std::vector<std::vector<std::size_t>>& partition,
                            Scenario scenario, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train_fraction must be in (0, 1]");
  }
  const std::vector<std::size_t> assignment = assign_to_tasks(data, partition);
  const std::size_t tasks = partition.size();
  std::vector<std::vector<std::size_t>> members(tasks);
  for (std::size_t e = 0; e < data.size(); ++e) members[assignment[e]].push_back(e);

  std::size_t total_classes = 0;
  for (const auto& set : partition) {
    for (std::size_t c : set) total_classes = std::max(total_classes, c + 1);
  }
  std::vector<TaskSpec> specs;
  std::vector<Dataset> train(tasks), test(tasks);
  std::vector<std::vector<std::size_t>> train_src(tasks), test_src(tasks);
  for (std::size_t t = 0; t < tasks; ++t) {
    specs.push_back(TaskSpec{t, partition[t]});
    Rng rng(derive_seed(seed, t));
    std::vector<std::size_t> order = members[t];
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(order.size()) + 0.5));
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i < n_train) {
        train[t].push_back(data[order[i]]);
        train_src[t].push_back(order[i]);
      } else {
        test[t].push_back(data[order[i]]);
        test_src[t].push_back(order[i]);
      }
    }
  }
  return TaskStream(scenario, std::move(specs), std::move(train), std::move(test),
                    std::move(train_src), std::move(test_src), total_classes);
}

namespace {

std::vector<double> indicator(const LabeledExample& ex, const std::vector<std::size_t>& columns) {
  std::vector<double> out(columns.size(), 0.0);
  for (std::size_t i = 0; i < columns.size(); ++i) out[i] = ex.has_label(columns[i]) ? 1.0 : 0.0;
  return out;
}

}  // namespace

std::vector<double> project_labels(const LabeledExample& ex, const TaskStream& stream,
                                   std::size_t t, Scenario scenario) {
  if (scenario == Scenario::IL) return indicator(ex, stream.task(t).classes);
  return indicator(ex, stream.seen_classes(t));
}

std::vector<double> project_test_labels(const LabeledExample& ex, const TaskStream& stream,
                                        std::size_t t) {
  return indicator(ex, stream.seen_classes(t));
}

Matrix feature_matrix(const Dataset& data, std::span<const std::size_t> rows) {
  if (rows.empty()) return Matrix();
  const std::size_t d = data.at(rows.front()).features.size();
  Matrix out(rows.size(), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = data.at(rows[r]).features;
    if (f.size() != d) throw DimensionError("feature_matrix: ragged feature widths");
    std::copy(f.begin(), f.end(), out.row(r).begin());
  }
  return out;
}

Matrix feature_matrix(const Dataset& data) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return feature_matrix(data, rows);
}

}  // namespace mlcl
