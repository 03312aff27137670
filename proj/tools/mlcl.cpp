#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mlcl/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-label continual learning experiments"};
  app.require_subcommand(1);
  mlcl::CliOptions o;
  std::string config, out;
  std::uint64_t seed = 0;
  double tolerance = 0;

  auto common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", config, "configuration file");
    auto* opt = sub->add_option("--out", out, "output directory");
    if (needs_out) opt->required();
    sub->add_option("--seed", seed, "overrides the configured seed");
  };
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset and stream manifest");
  common(gen, true);
  gen->add_flag("--force", o.force, "reuse a non-empty output directory");
  auto* run = app.add_subcommand("run", "train and evaluate, writing reports");
  common(run, true);
  run->add_flag("--force", o.force, "reuse a non-empty output directory");
  auto* oracle = app.add_subcommand("oracle", "compare a run's ACM dumps with the oracle ACM");
  common(oracle, true);
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
  common(grad, false);
  grad->add_option("--tolerance", tolerance, "relative error bound");
  grad->add_flag("--inject-fault", o.inject_fault, "scale analytic gradients by 1.1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mlcl::kExitInputError;
  }
  CLI::App* sub = app.get_subcommands().front();
  o.command = sub->get_name();
  if (sub->count("--config")) o.config = config;
  o.out = out;
  if (sub->count("--seed")) o.seed = seed;
  if (o.command == "gradcheck" && sub->count("--tolerance")) o.tolerance = tolerance;
  return mlcl::dispatch(o, std::cout, std::cerr);
}
