#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "mlcl/grad_check.hpp"
#include "mlcl/kv.hpp"
#include "mlcl/stream.hpp"
#include "mlcl/trainer.hpp"

namespace mlcl {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitInputError = 2, kExitNumerical = 3 };

struct CliOptions {
  std::string command;  // generate | run | oracle | gradcheck
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::optional<double> tolerance;
  bool inject_fault = false;
};

// Everything one invocation needs. Sections: [stream] [model] [train] [loss].
struct ExperimentConfig {
  // [stream]
  std::string source = "synthetic";  // synthetic | file
  ChainSpecParams chain{};
  std::size_t examples = 2000;
  Scenario scenario = Scenario::IL;
  bool scenario_set = false;
  double train_fraction = 0.7;
  std::uint64_t split_seed = 1;
  std::filesystem::path dataset;   // file source
  std::filesystem::path manifest;  // file source
  // [model] [train] [loss]
  RunConfig run{};

  // Relative paths resolve against `base`. Throws ConfigError on unknown keys or bad values.
  static ExperimentConfig from_keys(const KeyValueFile& kv, const std::filesystem::path& base = {});
  static ExperimentConfig load(const std::filesystem::path& path);
};

// Resolved configuration as `key = value` lines, written next to the reports.
std::string describe(const ExperimentConfig& config);

// Synthetic stream or dataset + manifest files, with the configured scenario applied.
TaskStream build_stream(const ExperimentConfig& config);

// Full objective of the second task on a toy 2-task, 6-class, D=8 instance after one
// task of real training, checked over every trainable parameter.
GradCheckReport objective_gradcheck(std::uint64_t seed, const LossWeights& weights,
                                    const GradCheckOptions& options);

int cmd_generate(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_run(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_oracle(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const CliOptions& options, std::ostream& out, std::ostream& err);
int dispatch(const CliOptions& options, std::ostream& out, std::ostream& err);

}  // namespace mlcl
