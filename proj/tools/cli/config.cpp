#include "cli/config.hpp"

#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include <fedkl/error.hpp>

namespace fedkl::cli {

namespace {

using nlohmann::json;

/// Typed access to one JSON object that remembers which keys were read.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(fmt::format("'{}' must be a JSON object", path_));
  }

  bool has(const char* key) const { return doc_.contains(key); }

  const json& raw(const char* key) {
    seen_.insert(key);
    return doc_.at(key);
  }

  double number(const char* key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError(fmt::format("'{}.{}' must be a number", path_, key));
    return v.get<double>();
  }

  std::size_t count(const char* key, std::size_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_number_unsigned()) throw ConfigError(fmt::format("'{}.{}' must be a non-negative integer", path_, key));
    return v.get<std::size_t>();
  }

  bool flag(const char* key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(fmt::format("'{}.{}' must be true or false", path_, key));
    return v.get<bool>();
  }

  std::string text(const char* key, std::string fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(fmt::format("'{}.{}' must be a string", path_, key));
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* key) {
    if (!has(key)) return {};
    const auto& v = raw(key);
    if (!v.is_array()) throw ConfigError(fmt::format("'{}.{}' must be an array of numbers", path_, key));
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(fmt::format("'{}.{}' must be an array of numbers", path_, key));
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::optional<Section> child(const char* key) {
    if (!has(key)) return std::nullopt;
    return Section(raw(key), path_ + "." + key);
  }

  const std::string& path() const { return path_; }

  /// Every key must have been read by now.
  void finish() const {
    for (const auto& item : doc_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(fmt::format("unknown key '{}' in '{}'", item.key(), path_));
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

Cell parse_cell(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
    throw ConfigError(fmt::format("'{}' cells must be [x, y] integer pairs", where));
  }
  return {v[0].get<int>(), v[1].get<int>()};
}

GridSpec parse_grid(Section& s) {
  GridSpec g;
  g.width = s.count("width", g.width);
  g.height = s.count("height", g.height);
  g.slip_prob = s.number("slip_prob", g.slip_prob);
  g.step_penalty = s.number("step_penalty", g.step_penalty);
  g.n_agents = s.count("n_agents", g.n_agents);
  g.gamma = s.number("gamma", g.gamma);
  g.dynamics_noise = s.numbers("dynamics_noise");
  if (s.has("goals")) {
    const auto& goals = s.raw("goals");
    if (!goals.is_array()) throw ConfigError(fmt::format("'{}.goals' must be an array", s.path()));
    for (const auto& item : goals) {
      Section goal(item, s.path() + ".goals[]");
      GoalCell cell;
      cell.cell.x = static_cast<int>(goal.count("x", 0));
      cell.cell.y = static_cast<int>(goal.count("y", 0));
      cell.reward = goal.number("reward", 1.0);
      goal.finish();
      g.goals.push_back(cell);
    }
  }
  if (s.has("init_regions")) {
    const auto& regions = s.raw("init_regions");
    const std::string where = s.path() + ".init_regions";
    if (regions.is_string()) {
      const auto mode = regions.get<std::string>();
      if (mode == "shared") {
        g.init_regions = {full_field_region(g)};
      } else if (mode == "columns") {
        g.init_regions = split_columns(g, g.n_agents);
      } else {
        throw ConfigError(fmt::format("'{}' must be \"shared\", \"columns\" or a list of cell lists", where));
      }
    } else if (regions.is_array()) {
      for (const auto& region : regions) {
        if (!region.is_array()) throw ConfigError(fmt::format("'{}' entries must be lists of cells", where));
        std::vector<Cell> cells;
        for (const auto& c : region) cells.push_back(parse_cell(c, where));
        g.init_regions.push_back(std::move(cells));
      }
    } else {
      throw ConfigError(fmt::format("'{}' must be a string or an array", where));
    }
  } else {
    g.init_regions = {full_field_region(g)};
  }
  return g;
}

GarnetSpec parse_garnet(Section& s) {
  GarnetSpec g;
  g.n_states = s.count("n_states", g.n_states);
  g.n_actions = s.count("n_actions", g.n_actions);
  g.branching = s.count("branching", g.branching);
  g.reward_sparsity = s.number("reward_sparsity", g.reward_sparsity);
  g.seed = s.count("seed", g.seed);
  g.n_agents = s.count("n_agents", g.n_agents);
  g.transition_perturbation = s.number("transition_perturbation", g.transition_perturbation);
  g.init_perturbation = s.number("init_perturbation", g.init_perturbation);
  g.gamma = s.number("gamma", g.gamma);
  return g;
}

ChainSpec parse_chain(Section& s) {
  ChainSpec c;
  c.gamma = s.number("gamma", c.gamma);
  if (!s.has("init")) throw ConfigError(fmt::format("'{}.init' is required", s.path()));
  const auto& init = s.raw("init");
  if (!init.is_array() || init.empty()) throw ConfigError(fmt::format("'{}.init' must be a non-empty array", s.path()));
  for (const auto& mu : init) {
    if (!mu.is_array() || mu.size() != 2 || !mu[0].is_number() || !mu[1].is_number()) {
      throw ConfigError(fmt::format("'{}.init' entries must be [mu0, mu1]", s.path()));
    }
    c.init.push_back({mu[0].get<double>(), mu[1].get<double>()});
  }
  return c;
}

EnvironmentConfig parse_environment(Section& s, const std::filesystem::path& base_dir) {
  EnvironmentConfig env;
  const auto kind = s.text("kind", "gridworld");
  if (kind == "gridworld") {
    env.kind = EnvironmentKind::Gridworld;
    env.grid = parse_grid(s);
  } else if (kind == "garnet") {
    env.kind = EnvironmentKind::Garnet;
    env.garnet = parse_garnet(s);
  } else if (kind == "chain") {
    env.kind = EnvironmentKind::Chain;
    env.chain = parse_chain(s);
  } else if (kind == "file") {
    env.kind = EnvironmentKind::File;
    const auto path = s.text("path", "");
    if (path.empty()) throw ConfigError(fmt::format("'{}.path' is required for kind \"file\"", s.path()));
    env.file = base_dir / path;
  } else {
    throw ConfigError(fmt::format("unknown environment kind '{}'", kind));
  }
  s.finish();
  return env;
}

void parse_penalty(Section& s, PenaltySettings& p) {
  p.d_local = s.number("d_local", p.d_local);
  p.d_global = s.number("d_global", p.d_global);
  p.c1_init = s.number("c1_init", p.c1_init);
  p.c2_init = s.number("c2_init", p.c2_init);
  p.fedprox_mu = s.number("fedprox_mu", p.fedprox_mu);
  s.finish();
}

void parse_federation(Section& s, FedConfig& f) {
  f.participants = s.count("participants", f.n_agents);
  f.local_iterations = s.count("local_iterations", f.local_iterations);
  f.timesteps = s.count("timesteps", f.timesteps);
  f.epochs = s.count("epochs", f.epochs);
  f.weights = s.numbers("weights");
  f.rounds = s.count("rounds", f.rounds);
  f.algorithm = parse_algorithm(s.text("algorithm", std::string(algorithm_name(f.algorithm))));
  f.workers = s.count("workers", f.workers);
  f.track_heterogeneity = s.flag("track_heterogeneity", f.track_heterogeneity);
  if (auto penalty = s.child("penalty")) parse_penalty(*penalty, f.penalty);
  s.finish();
}

void parse_trainer(Section& s, TrainerConfig& t) {
  t.learning_rate = s.number("learning_rate", t.learning_rate);
  t.value_learning_rate = s.number("value_learning_rate", t.value_learning_rate);
  t.batch_size = s.count("batch_size", t.batch_size);
  t.lambda = s.number("lambda", t.lambda);
  t.value_epochs = s.count("value_epochs", t.value_epochs);
  t.parameterization =
      parse_parameterization(s.text("parameterization", std::string(parameterization_name(t.parameterization))));
  t.hidden = s.count("hidden", t.hidden);
  t.evaluation_episodes = s.count("evaluation_episodes", t.evaluation_episodes);
  t.evaluation_horizon = s.count("evaluation_horizon", t.evaluation_horizon);
  s.finish();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<FiniteMdp> EnvironmentConfig::build() const {
  try {
    switch (kind) {
      case EnvironmentKind::Gridworld: return make_gridworld_family(grid);
      case EnvironmentKind::Garnet: return make_garnet_family(garnet);
      case EnvironmentKind::Chain: {
        std::vector<FiniteMdp> family;
        for (const auto& mu : chain.init) family.push_back(make_two_state_chain(chain.gamma, mu));
        return family;
      }
      case EnvironmentKind::File: {
        const auto text = read_file(file);
        const auto doc = json::parse(text, nullptr, false);
        if (doc.is_object() && doc.contains("family")) return family_from_json(doc.at("family").dump());
        return family_from_json(text);
      }
    }
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("unknown environment kind");
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }

  ExperimentConfig config;
  Section root(doc, "config");
  config.seed = root.count("seed", config.seed);
  config.output_dir = root.text("output_dir", config.output_dir.string());

  if (auto env = root.child("environment")) {
    config.environment = parse_environment(*env, base_dir);
  } else {
    throw ConfigError("'config.environment' is required");
  }
  config.family = config.environment.build();
  if (config.family.empty()) throw ConfigError("environment has no agents");

  config.federation.n_agents = config.family.size();
  config.federation.participants = config.family.size();
  if (auto fed = root.child("federation")) parse_federation(*fed, config.federation);
  config.federation.master_seed = config.seed;
  if (auto trainer = root.child("trainer")) parse_trainer(*trainer, config.trainer);

  if (auto analysis = root.child("analysis")) {
    const auto checkpoint = analysis->text("checkpoint", "");
    if (!checkpoint.empty()) config.analysis.checkpoint = base_dir / checkpoint;
    analysis->finish();
  }
  if (auto bounds = root.child("bounds")) {
    config.bound_seeds = bounds->count("seeds", config.bound_seeds);
    config.bound_max_states = bounds->count("max_states", config.bound_max_states);
    config.bound_max_actions = bounds->count("max_actions", config.bound_max_actions);
    config.bound_max_agents = bounds->count("max_agents", config.bound_max_agents);
    bounds->finish();
    if (config.bound_max_states < 1 || config.bound_max_actions < 2 || config.bound_max_agents < 1) {
      throw ConfigError("bounds limits need max_states >= 1, max_actions >= 2, max_agents >= 1");
    }
  }
  if (auto compare = root.child("compare")) {
    if (compare->has("algorithms")) {
      const auto& algs = compare->raw("algorithms");
      if (!algs.is_array()) throw ConfigError("'config.compare.algorithms' must be an array of names");
      for (const auto& a : algs) {
        if (!a.is_string()) throw ConfigError("'config.compare.algorithms' must be an array of names");
        parse_algorithm(a.get<std::string>());
        config.compare_algorithms.push_back(a.get<std::string>());
      }
    }
    config.compare_repetitions = compare->count("repetitions", config.compare_repetitions);
    compare->finish();
    if (config.compare_repetitions == 0) throw ConfigError("'config.compare.repetitions' must be positive");
  }
  root.finish();

  config.federation.validate();
  config.trainer.validate();

  doc.erase("output_dir");
  doc.erase("seed");
  config.canonical = doc.dump();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : config.canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace fedkl::cli
