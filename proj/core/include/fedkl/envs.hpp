#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedkl/mdp.hpp"
#include "fedkl/rng.hpp"

namespace fedkl {

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

struct GoalCell {
  Cell cell;
  double reward = 1.0;
};

/// Gridworld actions. y grows downward; North decreases y.
enum class GridAction : std::size_t { North = 0, South = 1, East = 2, West = 3 };
inline constexpr std::size_t kGridActions = 4;

/**
 * A family of gridworld agents sharing S and A.
 *
 * Agent n starts uniformly inside init_regions[n] and sees the base dynamics
 * with its chosen action replaced, with probability dynamics_noise[n], by a
 * uniformly random action. Region heterogeneity and noise heterogeneity can
 * be combined. A single region listed once is shared by every agent.
 */
struct GridSpec {
  std::size_t width = 5;
  std::size_t height = 5;
  double slip_prob = 0.0;
  std::vector<GoalCell> goals;
  double step_penalty = 0.0;
  std::size_t n_agents = 1;
  std::vector<std::vector<Cell>> init_regions;
  std::vector<double> dynamics_noise;
  double gamma = 0.99;

  std::size_t n_states() const noexcept { return width * height; }
  std::size_t state_of(Cell c) const noexcept;
  Cell cell_of(std::size_t state) const noexcept;
  bool is_goal(Cell c) const noexcept;
};

/// Every non-goal cell.
std::vector<Cell> full_field_region(const GridSpec& spec);

/// Non-goal cells split into `parts` contiguous vertical bands (by column).
std::vector<std::vector<Cell>> split_columns(const GridSpec& spec, std::size_t parts);

std::vector<FiniteMdp> make_gridworld_family(const GridSpec& spec);

/// P_sigma(s'|s,a) = (1-sigma) P(s'|s,a) + sigma * mean_a' P(s'|s,a'); rewards mix the same way.
FiniteMdp apply_action_noise(const FiniteMdp& base, double sigma);

/**
 * Garnet-style random MDPs. Each (s,a) row has `branching` distinct successors
 * with random weights; a (s,a) pair is rewarded (uniform on [0,1)) with
 * probability 1 - reward_sparsity. Agents mix the shared base with their own
 * random tables: P_n = (1-e_P) P + e_P P_n', mu_n = (1-e_mu) mu + e_mu mu_n'.
 */
struct GarnetSpec {
  std::size_t n_states = 10;
  std::size_t n_actions = 3;
  std::size_t branching = 3;
  double reward_sparsity = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_agents = 2;
  double transition_perturbation = 0.0;
  double init_perturbation = 0.0;
  double gamma = 0.9;
};

std::vector<FiniteMdp> make_garnet_family(const GarnetSpec& spec);

/// Two states, actions {stay, switch}, deterministic moves, R(s,.) = 1 iff s = 1.
FiniteMdp make_two_state_chain(double gamma, std::array<double, 2> init_dist);

/// Zero-reward self-looping states; the sampler treats entering one as episode end.
std::vector<bool> absorbing_states(const FiniteMdp& mdp);

struct Transition {
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
  bool terminal = false;
  double log_prob = 0.0;  // behavior log pi(a|s)
};

struct TrajectoryBatch {
  std::vector<Transition> steps;

  std::size_t size() const noexcept { return steps.size(); }
};

/**
 * Exactly T transitions from mu / pi / P. Rewards are the expected R(s,a).
 * Entering an absorbing state ends the episode and the next step restarts
 * from mu; everything is determined by `rng`.
 */
TrajectoryBatch sample_trajectory(const FiniteMdp& mdp, const TabularPolicy& policy, std::size_t T,
                                  RngStream& rng);

/// Discounted return of one episode, truncated at `horizon` steps or an absorbing state.
double sample_episode_return(const FiniteMdp& mdp, const TabularPolicy& policy,
                             std::size_t horizon, RngStream& rng);

}  // namespace fedkl
