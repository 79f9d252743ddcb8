#include <CLI11.hpp>
#include <iostream>

#include "cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace fedkl::cli;

  CLI::App app{"fedkl: federated policy optimization on exactly solvable MDPs"};
  app.require_subcommand(1);

  CommandOptions options;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t workers = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("-o,--out", out_dir, "Output directory (beats $FEDKL_OUTPUT_DIR and the config)");
    sub->add_option("--workers", workers, "Worker threads for per-agent work");
    sub->add_flag("-v,--verbose", options.verbose, "Progress on stderr");
  };

  auto* analyze = app.add_subcommand("analyze", "Heterogeneity levels of a family under a policy");
  auto* verify = app.add_subcommand("verify-bounds", "Check every improvement bound on random instances");
  auto* train = app.add_subcommand("train", "Run one federated training job");
  auto* compare = app.add_subcommand("compare", "Train several algorithms on the same family");
  auto* gen_env = app.add_subcommand("gen-env", "Write the configured MDP family as JSON");
  for (auto* sub : {analyze, verify, train, compare, gen_env}) add_common(sub);
  verify->add_flag("--inject-bug", options.inject_bug, "Negate the penalty term; every check should then fail")
      ->group("");
  compare->add_option("--algorithms", options.algorithms, "exact-tabular, fedkl, fedavg, fedprox");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitSuccess : kExitConfigError;
  }

  auto* chosen = app.get_subcommands().front();
  options.config_path = config_path;
  if (chosen->count("--seed") > 0) options.seed = seed;
  if (chosen->count("--out") > 0) options.out_dir = out_dir;
  if (chosen->count("--workers") > 0) options.workers = workers;
  return run_command(chosen->get_name(), options, std::cout, std::cerr);
}
