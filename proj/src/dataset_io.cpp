#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "mlcl/errors.hpp"
#include "mlcl/kv.hpp"
#include "mlcl/stream.hpp"

namespace mlcl {

std::string format_dataset(const Dataset& data) {
  std::string out;
  for (const auto& ex : data) {
    for (std::size_t i = 0; i < ex.features.size(); ++i) {
      if (i) out += ',';
      out += format_double(ex.features[i]);
    }
    out += '|';
    for (std::size_t i = 0; i < ex.labels.size(); ++i) {
      if (i) out += ';';
      out += std::to_string(ex.labels[i]);
    }
    out += '\n';
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << format_dataset(data);
}

namespace {

template <typename T>
bool parse_number(std::string_view text, T& value) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end && !text.empty();
}

}  // namespace

Dataset parse_dataset(const std::string& text) {
  Dataset out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto bar = line.find('|');
    if (bar == std::string::npos || line.find('|', bar + 1) != std::string::npos) {
      throw ParseError(line_no, "expected exactly one '|' separating features and labels");
    }
    LabeledExample ex;
    std::string_view feats(line.data(), bar);
    std::string_view labels(line.data() + bar + 1, line.size() - bar - 1);
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = feats.find(',', start);
      const std::string_view item = feats.substr(start, comma == std::string_view::npos
                                                            ? std::string_view::npos
                                                            : comma - start);
      double v = 0.0;
      if (!parse_number(item, v)) {
        throw ParseError(line_no, "bad feature value '" + std::string(item) + "'");
      }
      ex.features.push_back(v);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (out.empty()) {
      width = ex.features.size();
    } else if (ex.features.size() != width) {
      throw ParseError(line_no, "feature vector has " + std::to_string(ex.features.size()) +
                                    " entries, expected " + std::to_string(width));
    }
    if (labels.empty()) {
      throw DataError("line " + std::to_string(line_no) + ": empty label field");
    }
    start = 0;
    while (true) {
      const std::size_t semi = labels.find(';', start);
      const std::string_view item = labels.substr(start, semi == std::string_view::npos
                                                             ? std::string_view::npos
                                                             : semi - start);
      std::size_t c = 0;
      if (!parse_number(item, c)) {
        throw ParseError(line_no, "bad class index '" + std::string(item) + "'");
      }
      ex.labels.push_back(c);
      if (semi == std::string_view::npos) break;
      start = semi + 1;
    }
    std::sort(ex.labels.begin(), ex.labels.end());
    if (std::adjacent_find(ex.labels.begin(), ex.labels.end()) != ex.labels.end()) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate class index");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

StreamManifest make_manifest(const TaskStream& stream, std::size_t feature_dim,
                             std::uint64_t split_seed, double train_fraction) {
  StreamManifest m;
  m.scenario = stream.scenario();
  m.total_classes = stream.total_classes();
  m.feature_dim = feature_dim;
  m.split_seed = split_seed;
  m.train_fraction = train_fraction;
  for (std::size_t t = 0; t < stream.num_tasks(); ++t) {
    m.partition.push_back(stream.task(t).classes);
    m.train_counts.push_back(stream.train(t).size());
    m.test_counts.push_back(stream.test(t).size());
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const StreamManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << "format = mlcl-stream-1\n";
  out << "scenario = " << to_string(m.scenario) << "\n";
  out << "tasks = " << m.partition.size() << "\n";
  out << "classes = " << m.total_classes << "\n";
  out << "feature_dim = " << m.feature_dim << "\n";
  out << "split_seed = " << m.split_seed << "\n";
  out << "train_fraction = " << format_double(m.train_fraction) << "\n";
  for (std::size_t t = 0; t < m.partition.size(); ++t) {
    out << "\n[task." << (t + 1) << "]\n";
    out << "classes = ";
    for (std::size_t i = 0; i < m.partition[t].size(); ++i) {
      if (i) out << ';';
      out << m.partition[t][i];
    }
    out << "\ntrain = " << m.train_counts[t] << "\ntest = " << m.test_counts[t] << "\n";
  }
}

StreamManifest load_manifest(const std::filesystem::path& path) {
  const KeyValueFile kv = KeyValueFile::load(path);
  if (kv.get_or("format", "") != "mlcl-stream-1") {
    throw ConfigError(path.string() + ": not an mlcl stream manifest");
  }
  StreamManifest m;
  m.scenario = parse_scenario(kv.get("scenario"));
  const std::size_t tasks = parse_count(kv.get("tasks"), "tasks");
  m.total_classes = parse_count(kv.get("classes"), "classes");
  m.feature_dim = parse_count(kv.get("feature_dim"), "feature_dim");
  m.split_seed = parse_count(kv.get("split_seed"), "split_seed");
  m.train_fraction = parse_double(kv.get("train_fraction"), "train_fraction");
  for (std::size_t t = 0; t < tasks; ++t) {
    const std::string prefix = "task." + std::to_string(t + 1) + ".";
    m.partition.push_back(parse_index_list(kv.get(prefix + "classes"), ';', prefix + "classes"));
    m.train_counts.push_back(parse_count(kv.get(prefix + "train"), prefix + "train"));
    m.test_counts.push_back(parse_count(kv.get(prefix + "test"), prefix + "test"));
  }
  return m;
}

TaskStream stream_from_manifest(const Dataset& data, const StreamManifest& m) {
  if (!data.empty() && data.front().features.size() != m.feature_dim) {
    throw DataError("dataset feature width " + std::to_string(data.front().features.size()) +
                    " differs from manifest feature_dim " + std::to_string(m.feature_dim));
  }
  TaskStream stream = split_into_tasks(data, m.partition, m.scenario, m.train_fraction, m.split_seed);
  for (std::size_t t = 0; t < stream.num_tasks(); ++t) {
    if (stream.train(t).size() != m.train_counts[t] || stream.test(t).size() != m.test_counts[t]) {
      throw DataError("task " + std::to_string(t + 1) + ": dataset yields " +
                      std::to_string(stream.train(t).size()) + "/" +
                      std::to_string(stream.test(t).size()) + " train/test examples, manifest lists " +
                      std::to_string(m.train_counts[t]) + "/" + std::to_string(m.test_counts[t]));
    }
  }
  return stream;
}

}  // namespace mlcl
