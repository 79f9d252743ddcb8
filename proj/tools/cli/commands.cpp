#include "cli/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <map>
#include <ostream>
#include <sstream>

#include <fedkl/bounds.hpp>
#include <fedkl/error.hpp>
#include <fedkl/hetero.hpp>

namespace fedkl::cli {

namespace {

using nlohmann::json;

struct Header {
  std::string command;
  std::string hash;
  std::uint64_t seed = 0;

  std::string csv() const { return fmt::format("# fedkl {}\n# config_hash: {}\n# seed: {}\n", command, hash, seed); }
  json object() const { return {{"command", command}, {"config_hash", hash}, {"seed", seed}}; }
};

Header header_for(const std::string& command, const ExperimentConfig& config) {
  return {command, config_hash(config), config.seed};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  file << content;
}

std::string with_header(const Header& h, const std::string& json_text) {
  auto doc = json::parse(json_text);
  json wrapped;
  wrapped["header"] = h.object();
  wrapped["body"] = std::move(doc);
  return wrapped.dump(2) + "\n";
}

std::string policy_json(const Header& h, const TabularPolicy& policy) {
  json doc;
  doc["header"] = h.object();
  doc["n_states"] = policy.n_states();
  doc["n_actions"] = policy.n_actions();
  doc["probs"] = std::vector<double>(policy.probs().begin(), policy.probs().end());
  return doc.dump() + "\n";
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TrainOutcome {
  FedHistory history;
  std::string checkpoint;
  bool exact = false;
  BoundCheck monotone;
};

TrainOutcome run_training(const ExperimentConfig& config, const Header& h) {
  TrainOutcome outcome;
  if (config.federation.algorithm == Algorithm::ExactTabular) {
    TabularPolicy final_policy = TabularPolicy::uniform(config.family[0].n_states(), config.family[0].n_actions());
    outcome.history = run_federated_policy_iteration(config.federation, config.family, std::nullopt, &final_policy);
    outcome.checkpoint = policy_json(h, final_policy);
    outcome.exact = true;
    outcome.monotone = check_monotone_history(outcome.history);
  } else {
    auto run = run_fedkl(config.federation, config.trainer, config.family);
    outcome.history = std::move(run.history);
    auto doc = json::parse(run.final_policy.checkpoint_json());
    doc["header"] = h.object();
    outcome.checkpoint = doc.dump() + "\n";
  }
  return outcome;
}

std::string heterogeneity_table(const FedHistory& history) {
  std::string out = heterogeneity_csv_header();
  for (const auto& r : history.rounds) {
    if (r.heterogeneity) out += heterogeneity_csv_rows(*r.heterogeneity, r.round);
  }
  return out;
}

}  // namespace

std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const CommandOptions& options) {
  if (options.out_dir) return *options.out_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

TabularPolicy load_policy(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
    if (doc.contains("architecture")) {
      doc.erase("header");
      return SoftmaxPolicy::from_checkpoint_json(doc.dump()).to_tabular();
    }
    return TabularPolicy(doc.at("n_states").get<std::size_t>(), doc.at("n_actions").get<std::size_t>(),
                         doc.at("probs").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("invalid policy file '{}': {}", path.string(), e.what()));
  } catch (const ValidationError& e) {
    throw ConfigError(fmt::format("invalid policy file '{}': {}", path.string(), e.what()));
  }
}

int cmd_analyze(const ExperimentConfig& config, const std::filesystem::path& dir, std::ostream& out) {
  const auto h = header_for("analyze", config);
  const auto& family = config.family;
  const TabularPolicy policy = config.analysis.checkpoint.empty()
                                   ? TabularPolicy::uniform(family[0].n_states(), family[0].n_actions())
                                   : load_policy(config.analysis.checkpoint);
  check_shapes(family[0], policy);
  const auto report = heterogeneity_report(family, config.federation.resolved_weights(), policy);

  write_file(dir / "heterogeneity.csv", h.csv() + heterogeneity_csv_header() + heterogeneity_csv_rows(report, 0));
  write_file(dir / "heterogeneity.json", with_header(h, heterogeneity_to_json(report)));
  for (const auto& a : report.agents) {
    out << fmt::format("agent {}: b_norm={:.6g} a_norm={:.6g} g_scaled={:.6g} alpha={:.6g} delta={:.6g}\n", a.agent,
                       a.b_norm, a.a_norm, a.g_scaled, a.alpha, a.delta);
  }
  out << fmt::format("beta={:.6g}\n", report.beta);
  return kExitSuccess;
}

int cmd_verify_bounds(const ExperimentConfig& config, const std::filesystem::path& dir, bool inject_bug,
                      std::ostream& out) {
  const auto h = header_for("verify-bounds", config);
  BoundOptions options;
  options.negate_penalty = inject_bug;
  SweepLimits limits;
  limits.max_states = config.bound_max_states;
  limits.max_actions = config.bound_max_actions;
  limits.max_agents = config.bound_max_agents;
  const auto records = run_bound_sweep(config.bound_seeds, config.seed, options, limits);

  std::string jsonl = json{{"header", h.object()}}.dump() + "\n";
  struct Tally {
    std::size_t count = 0;
    std::size_t violations = 0;
    double min_slack = 0.0;
  };
  std::map<std::string, Tally> tallies;
  for (const auto& r : records) {
    jsonl += sweep_record_to_json(r) + "\n";
    auto& t = tallies[r.check.name];
    if (t.count == 0 || r.check.slack < t.min_slack) t.min_slack = r.check.slack;
    ++t.count;
    if (!r.check.holds) ++t.violations;
  }
  std::string csv = h.csv() + "check,count,violations,min_slack\n";
  std::size_t violations = 0;
  for (const auto& [name, t] : tallies) {
    csv += fmt::format("{},{},{},{:.12g}\n", name, t.count, t.violations, t.min_slack);
    out << fmt::format("{:<20} {:>6} checks {:>6} violations  min slack {:.3g}\n", name, t.count, t.violations,
                       t.min_slack);
    violations += t.violations;
  }
  write_file(dir / "bounds.jsonl", jsonl);
  write_file(dir / "bounds_summary.csv", csv);
  out << fmt::format("{} records, {} violations\n", records.size(), violations);
  return violations == 0 ? kExitSuccess : kExitCheckFailure;
}

int cmd_train(const ExperimentConfig& config, const std::filesystem::path& dir, std::ostream& out) {
  const auto h = header_for("train", config);
  const auto outcome = run_training(config, h);
  write_file(dir / "history.csv", h.csv() + history_csv(outcome.history));
  write_file(dir / "summary.json", with_header(h, history_summary_json(outcome.history)));
  write_file(dir / "checkpoint.json", outcome.checkpoint);
  if (config.federation.track_heterogeneity) {
    write_file(dir / "heterogeneity.csv", h.csv() + heterogeneity_table(outcome.history));
  }
  if (!outcome.exact) write_file(dir / "iterations.csv", h.csv() + iteration_stats_csv(outcome.history));

  const auto etas = outcome.history.global_returns();
  out << fmt::format("{}: eta {:.6g} -> {:.6g} over {} rounds\n", algorithm_name(config.federation.algorithm),
                     etas.front(), etas.back(), etas.size() - 1);
  if (outcome.exact && !outcome.monotone.holds) {
    out << fmt::format("monotonicity violated at round {} (change {:.3g})\n", outcome.monotone.witness,
                       outcome.monotone.slack);
    return kExitCheckFailure;
  }
  return kExitSuccess;
}

int cmd_compare(const ExperimentConfig& config, const std::vector<std::string>& algorithms,
                const std::filesystem::path& dir, std::ostream& out) {
  if (algorithms.empty()) throw ConfigError("compare needs at least one algorithm");
  const auto h = header_for("compare", config);
  const std::size_t reps = config.compare_repetitions;

  std::vector<std::vector<double>> means;
  std::string runs = h.csv() + "algorithm,repetition,round,eta_global\n";
  for (const auto& name : algorithms) {
    std::vector<double> mean;
    for (std::size_t r = 0; r < reps; ++r) {
      ExperimentConfig run_config = config;
      run_config.federation.algorithm = parse_algorithm(name);
      run_config.federation.master_seed = config.seed + r;
      const auto outcome = run_training(run_config, h);
      const auto etas = outcome.history.global_returns();
      if (mean.empty()) mean.assign(etas.size(), 0.0);
      for (std::size_t t = 0; t < etas.size(); ++t) {
        mean[t] += etas[t] / static_cast<double>(reps);
        runs += fmt::format("{},{},{},{:.12g}\n", name, r, t, etas[t]);
      }
    }
    out << fmt::format("{:<14} final mean return {:.6g}\n", name, mean.back());
    means.push_back(std::move(mean));
  }

  std::string csv = h.csv() + "round";
  for (const auto& name : algorithms) csv += "," + name;
  csv += "\n";
  for (std::size_t t = 0; t < means[0].size(); ++t) {
    csv += std::to_string(t);
    for (const auto& m : means) csv += fmt::format(",{:.12g}", m[t]);
    csv += "\n";
  }
  write_file(dir / "compare.csv", csv);
  write_file(dir / "compare_runs.csv", runs);
  return kExitSuccess;
}

int cmd_gen_env(const ExperimentConfig& config, const std::filesystem::path& dir, std::ostream& out) {
  const auto h = header_for("gen-env", config);
  const std::string doc = "{\"header\": " + h.object().dump() + ",\n\"family\": " + family_to_json(config.family) + "}\n";
  write_file(dir / "family.json", doc);
  out << fmt::format("{} agents, {} states, {} actions\n", config.family.size(), config.family[0].n_states(),
                     config.family[0].n_actions());
  return kExitSuccess;
}

int run_command(std::string_view command, const CommandOptions& options, std::ostream& out, std::ostream& err) {
  try {
    auto config = load_config(options.config_path);
    if (options.seed) {
      config.seed = *options.seed;
      config.federation.master_seed = *options.seed;
    }
    if (options.workers) {
      if (*options.workers == 0) throw ConfigError("--workers must be positive");
      config.federation.workers = *options.workers;
    }
    const auto dir = resolve_output_dir(config, options);
    std::filesystem::create_directories(dir);
    if (options.verbose) err << fmt::format("{}: writing to {}\n", command, dir.string());

    if (command == "analyze") return cmd_analyze(config, dir, out);
    if (command == "verify-bounds") return cmd_verify_bounds(config, dir, options.inject_bug, out);
    if (command == "train") return cmd_train(config, dir, out);
    if (command == "compare") {
      return cmd_compare(config, options.algorithms.empty() ? config.compare_algorithms : options.algorithms, dir,
                         out);
    }
    if (command == "gen-env") return cmd_gen_env(config, dir, out);
    err << fmt::format("unknown command '{}'\n", command);
    return kExitConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const UnreachableStateError& e) {
    err << "config error: " << e.what() << "; widen the start distribution or the policy support\n";
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  }
}

}  // namespace fedkl::cli
