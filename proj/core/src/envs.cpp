#include "fedkl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "fedkl/error.hpp"

namespace fedkl {

std::size_t GridSpec::state_of(Cell c) const noexcept {
  return static_cast<std::size_t>(c.y) * width + static_cast<std::size_t>(c.x);
}

Cell GridSpec::cell_of(std::size_t state) const noexcept {
  return Cell{static_cast<int>(state % width), static_cast<int>(state / width)};
}

bool GridSpec::is_goal(Cell c) const noexcept {
  return std::any_of(goals.begin(), goals.end(), [&](const GoalCell& g) { return g.cell == c; });
}

std::vector<Cell> full_field_region(const GridSpec& spec) {
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < spec.n_states(); ++s) {
    const Cell c = spec.cell_of(s);
    if (!spec.is_goal(c)) cells.push_back(c);
  }
  return cells;
}

std::vector<std::vector<Cell>> split_columns(const GridSpec& spec, std::size_t parts) {
  if (parts == 0 || parts > spec.width) throw ConfigError("split_columns: need 1 <= parts <= width");
  std::vector<std::vector<Cell>> regions(parts);
  for (const Cell c : full_field_region(spec)) {
    const std::size_t band = static_cast<std::size_t>(c.x) * parts / spec.width;
    regions[band].push_back(c);
  }
  return regions;
}

namespace {

Cell step(const GridSpec& spec, Cell c, std::size_t action) {
  Cell n = c;
  switch (static_cast<GridAction>(action)) {
    case GridAction::North: n.y -= 1; break;
    case GridAction::South: n.y += 1; break;
    case GridAction::East: n.x += 1; break;
    case GridAction::West: n.x -= 1; break;
  }
  if (n.x < 0 || n.y < 0 || n.x >= static_cast<int>(spec.width) || n.y >= static_cast<int>(spec.height)) return c;
  return n;
}

// The two directions perpendicular to `action`.
std::array<std::size_t, 2> lateral(std::size_t action) {
  if (action <= 1) return {2, 3};
  return {0, 1};
}

void validate(const GridSpec& spec) {
  if (spec.width == 0 || spec.height == 0) throw ConfigError("gridworld needs positive width and height");
  if (!(spec.slip_prob >= 0.0 && spec.slip_prob <= 1.0)) throw ConfigError("slip_prob must lie in [0, 1]");
  if (spec.n_agents == 0) throw ConfigError("gridworld family needs at least one agent");
  if (spec.init_regions.size() != 1 && spec.init_regions.size() != spec.n_agents) {
    throw ConfigError("init_regions must list one shared region or one region per agent");
  }
  for (const auto& g : spec.goals) {
    if (g.cell.x < 0 || g.cell.y < 0 || g.cell.x >= static_cast<int>(spec.width) ||
        g.cell.y >= static_cast<int>(spec.height)) {
      throw ConfigError("goal cell outside the grid");
    }
  }
  for (std::size_t n = 0; n < spec.init_regions.size(); ++n) {
    const auto& region = spec.init_regions[n];
    if (region.empty()) throw ConfigError(fmt::format("init region {} is empty", n));
    for (const Cell c : region) {
      if (c.x < 0 || c.y < 0 || c.x >= static_cast<int>(spec.width) || c.y >= static_cast<int>(spec.height)) {
        throw ConfigError(fmt::format("init region {} has a cell outside the grid", n));
      }
      if (spec.is_goal(c)) throw ConfigError(fmt::format("init region {} contains a goal cell", n));
    }
  }
  if (!spec.dynamics_noise.empty() && spec.dynamics_noise.size() != 1 &&
      spec.dynamics_noise.size() != spec.n_agents) {
    throw ConfigError("dynamics_noise must be empty, shared, or one value per agent");
  }
  for (double sigma : spec.dynamics_noise) {
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw ConfigError("dynamics_noise entries must lie in [0, 1]");
  }
}

double goal_reward(const GridSpec& spec, Cell c) {
  for (const auto& g : spec.goals) {
    if (g.cell == c) return g.reward;
  }
  return 0.0;
}

}  // namespace

std::vector<FiniteMdp> make_gridworld_family(const GridSpec& spec) {
  validate(spec);
  const std::size_t S = spec.n_states();
  const std::size_t A = kGridActions;

  std::vector<double> p(S * A * S, 0.0);
  std::vector<double> r(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    const Cell c = spec.cell_of(s);
    for (std::size_t a = 0; a < A; ++a) {
      double* row = p.data() + (s * A + a) * S;
      if (spec.is_goal(c)) {
        row[s] = 1.0;  // absorbing, zero reward
        continue;
      }
      const auto side = lateral(a);
      row[spec.state_of(step(spec, c, a))] += 1.0 - spec.slip_prob;
      row[spec.state_of(step(spec, c, side[0]))] += 0.5 * spec.slip_prob;
      row[spec.state_of(step(spec, c, side[1]))] += 0.5 * spec.slip_prob;
      double reward = -spec.step_penalty;
      for (std::size_t t = 0; t < S; ++t) {
        if (row[t] > 0.0) reward += row[t] * goal_reward(spec, spec.cell_of(t));
      }
      r[s * A + a] = reward;
    }
  }

  std::vector<FiniteMdp> family;
  family.reserve(spec.n_agents);
  for (std::size_t n = 0; n < spec.n_agents; ++n) {
    const auto& region = spec.init_regions.size() == 1 ? spec.init_regions[0] : spec.init_regions[n];
    std::vector<double> mu(S, 0.0);
    for (const Cell c : region) mu[spec.state_of(c)] += 1.0;
    const double total = static_cast<double>(region.size());
    for (double& m : mu) m /= total;

    FiniteMdp base(S, A, p, r, std::move(mu), spec.gamma);
    double sigma = 0.0;
    if (spec.dynamics_noise.size() == 1) sigma = spec.dynamics_noise[0];
    if (spec.dynamics_noise.size() == spec.n_agents) sigma = spec.dynamics_noise[n];
    family.push_back(sigma > 0.0 ? apply_action_noise(base, sigma) : std::move(base));
  }
  return family;
}

FiniteMdp apply_action_noise(const FiniteMdp& base, double sigma) {
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw ConfigError("action noise must lie in [0, 1]");
  const std::size_t S = base.n_states();
  const std::size_t A = base.n_actions();
  const double inv_a = 1.0 / static_cast<double>(A);
  std::vector<double> p(S * A * S);
  std::vector<double> r(S * A);
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<double> mean_row(S, 0.0);
    double mean_reward = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      const auto row = base.transition_row(s, a);
      for (std::size_t t = 0; t < S; ++t) mean_row[t] += inv_a * row[t];
      mean_reward += inv_a * base.reward(s, a);
    }
    for (std::size_t a = 0; a < A; ++a) {
      const auto row = base.transition_row(s, a);
      for (std::size_t t = 0; t < S; ++t) p[(s * A + a) * S + t] = (1.0 - sigma) * row[t] + sigma * mean_row[t];
      r[s * A + a] = (1.0 - sigma) * base.reward(s, a) + sigma * mean_reward;
    }
  }
  return FiniteMdp(S, A, std::move(p), std::move(r),
                   std::vector<double>(base.init_dist().begin(), base.init_dist().end()), base.gamma());
}

namespace {

// Dirichlet(1, ..., 1) draw via normalized exponentials.
std::vector<double> flat_dirichlet(std::size_t n, RngStream& rng) {
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& x : w) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    x = -std::log(u);
    total += x;
  }
  for (auto& x : w) x /= total;
  return w;
}

std::vector<double> garnet_transitions(const GarnetSpec& spec, RngStream& rng) {
  const std::size_t S = spec.n_states;
  const std::size_t A = spec.n_actions;
  std::vector<double> p(S * A * S, 0.0);
  std::vector<std::size_t> order(S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t i = 0; i < S; ++i) order[i] = i;
      for (std::size_t i = 0; i < spec.branching; ++i) std::swap(order[i], order[i + rng.below(S - i)]);
      const auto w = flat_dirichlet(spec.branching, rng);
      for (std::size_t i = 0; i < spec.branching; ++i) p[(s * A + a) * S + order[i]] = w[i];
    }
  }
  return p;
}

}  // namespace

std::vector<FiniteMdp> make_garnet_family(const GarnetSpec& spec) {
  if (spec.n_states == 0 || spec.n_actions == 0) throw ConfigError("garnet needs positive state/action counts");
  if (spec.branching == 0 || spec.branching > spec.n_states) throw ConfigError("garnet branching must lie in [1, n_states]");
  if (!(spec.reward_sparsity >= 0.0 && spec.reward_sparsity <= 1.0)) throw ConfigError("reward_sparsity must lie in [0, 1]");
  if (spec.n_agents == 0) throw ConfigError("garnet family needs at least one agent");
  if (!(spec.transition_perturbation >= 0.0 && spec.transition_perturbation <= 1.0) ||
      !(spec.init_perturbation >= 0.0 && spec.init_perturbation <= 1.0)) {
    throw ConfigError("garnet perturbations must lie in [0, 1]");
  }

  const std::size_t S = spec.n_states;
  const std::size_t A = spec.n_actions;
  RngStream base_rng = RngStream::derive(spec.seed, 0, 0, 0);
  const auto p = garnet_transitions(spec, base_rng);
  std::vector<double> r(S * A, 0.0);
  for (auto& x : r) {
    const bool rewarded = base_rng.uniform() < 1.0 - spec.reward_sparsity;
    const double value = base_rng.uniform();
    x = rewarded ? value : 0.0;
  }
  const auto mu = flat_dirichlet(S, base_rng);

  std::vector<FiniteMdp> family;
  family.reserve(spec.n_agents);
  for (std::size_t n = 0; n < spec.n_agents; ++n) {
    RngStream agent_rng = RngStream::derive(spec.seed, n + 1, 0, 0);
    const auto p_own = garnet_transitions(spec, agent_rng);
    const auto mu_own = flat_dirichlet(S, agent_rng);
    std::vector<double> p_n = p;
    std::vector<double> mu_n = mu;
    if (spec.transition_perturbation > 0.0) {
      const double e = spec.transition_perturbation;
      for (std::size_t i = 0; i < p_n.size(); ++i) p_n[i] = (1.0 - e) * p[i] + e * p_own[i];
    }
    if (spec.init_perturbation > 0.0) {
      const double e = spec.init_perturbation;
      for (std::size_t i = 0; i < S; ++i) mu_n[i] = (1.0 - e) * mu[i] + e * mu_own[i];
    }
    family.emplace_back(S, A, std::move(p_n), r, std::move(mu_n), spec.gamma);
  }
  return family;
}

FiniteMdp make_two_state_chain(double gamma, std::array<double, 2> init_dist) {
  // action 0 = stay, action 1 = switch
  std::vector<double> p = {1.0, 0.0, 0.0, 1.0,   // s0: stay -> s0, switch -> s1
                           0.0, 1.0, 1.0, 0.0};  // s1: stay -> s1, switch -> s0
  std::vector<double> r = {0.0, 0.0, 1.0, 1.0};
  return FiniteMdp(2, 2, std::move(p), std::move(r), {init_dist[0], init_dist[1]}, gamma);
}

std::vector<bool> absorbing_states(const FiniteMdp& mdp) {
  std::vector<bool> out(mdp.n_states(), false);
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    bool absorbing = true;
    for (std::size_t a = 0; a < mdp.n_actions() && absorbing; ++a) {
      absorbing = mdp.transition(s, a, s) == 1.0 && mdp.reward(s, a) == 0.0;
    }
    out[s] = absorbing;
  }
  return out;
}

TrajectoryBatch sample_trajectory(const FiniteMdp& mdp, const TabularPolicy& policy, std::size_t T,
                                  RngStream& rng) {
  check_shapes(mdp, policy);
  if (T == 0) throw ShapeError("trajectory length must be positive");
  const auto absorbing = absorbing_states(mdp);
  TrajectoryBatch batch;
  batch.steps.reserve(T);
  std::size_t s = rng.categorical(mdp.init_dist());
  for (std::size_t t = 0; t < T; ++t) {
    Transition tr;
    tr.state = s;
    tr.action = rng.categorical(policy.row(s));
    tr.log_prob = std::log(policy(s, tr.action));
    tr.reward = mdp.reward(s, tr.action);
    tr.next_state = rng.categorical(mdp.transition_row(s, tr.action));
    tr.terminal = absorbing[tr.next_state];
    batch.steps.push_back(tr);
    s = tr.terminal ? rng.categorical(mdp.init_dist()) : tr.next_state;
  }
  return batch;
}

double sample_episode_return(const FiniteMdp& mdp, const TabularPolicy& policy, std::size_t horizon,
                             RngStream& rng) {
  check_shapes(mdp, policy);
  const auto absorbing = absorbing_states(mdp);
  std::size_t s = rng.categorical(mdp.init_dist());
  double total = 0.0;
  double discount = 1.0;
  for (std::size_t h = 0; h < horizon && !absorbing[s]; ++h) {
    const std::size_t a = rng.categorical(policy.row(s));
    total += discount * mdp.reward(s, a);
    discount *= mdp.gamma();
    s = rng.categorical(mdp.transition_row(s, a));
  }
  return total;
}

}  // namespace fedkl
