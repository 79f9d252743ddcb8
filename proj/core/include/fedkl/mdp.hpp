#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedkl {

/// Tolerance used when validating that probability rows sum to one.
inline constexpr double kProbabilityTolerance = 1e-12;

/// Residual tolerance for the linear systems behind V and rho.
inline constexpr double kSolverResidualTolerance = 1e-9;

/// Above this many states the solvers switch from dense LU to fixed-point iteration.
inline constexpr std::size_t kDenseSolverLimit = 512;

/**
 * One agent's finite discounted MDP (S, A, mu, P, R, gamma).
 *
 * Storage is flat and state-major: transition index ((s * A) + a) * S + s',
 * reward index s * A + a. All tables are validated on construction; a row
 * that does not sum to one is an error, never silently renormalized.
 */
class FiniteMdp {
 public:
  FiniteMdp(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
            std::vector<double> reward, std::vector<double> init_dist, double gamma);

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double gamma() const noexcept { return gamma_; }

  double transition(std::size_t s, std::size_t a, std::size_t next) const {
    return transition_[(s * n_actions_ + a) * n_states_ + next];
  }
  std::span<const double> transition_row(std::size_t s, std::size_t a) const {
    return {transition_.data() + (s * n_actions_ + a) * n_states_, n_states_};
  }
  std::span<const double> transitions() const noexcept { return transition_; }

  double reward(std::size_t s, std::size_t a) const { return reward_[s * n_actions_ + a]; }
  std::span<const double> rewards() const noexcept { return reward_; }

  double init(std::size_t s) const { return init_dist_[s]; }
  std::span<const double> init_dist() const noexcept { return init_dist_; }

  /// max_{s,a} |R(s,a)|
  double max_abs_reward() const noexcept;

  bool operator==(const FiniteMdp&) const = default;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> transition_;
  std::vector<double> reward_;
  std::vector<double> init_dist_;
  double gamma_;
};

/// Stochastic policy as a row-stochastic |S| x |A| table.
class TabularPolicy {
 public:
  TabularPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs);

  static TabularPolicy uniform(std::size_t n_states, std::size_t n_actions);
  static TabularPolicy deterministic(std::size_t n_actions, std::span<const std::size_t> actions);

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }

  double operator()(std::size_t s, std::size_t a) const { return probs_[s * n_actions_ + a]; }
  std::span<const double> row(std::size_t s) const {
    return {probs_.data() + s * n_actions_, n_actions_};
  }
  std::span<const double> probs() const noexcept { return probs_; }

  bool operator==(const TabularPolicy&) const = default;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> probs_;
};

/// Exact V, Q and A = Q - V for one (mdp, policy) pair. Q and A are flat, state-major.
struct ValueTables {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> v;
  std::vector<double> q;
  std::vector<double> adv;

  double q_at(std::size_t s, std::size_t a) const { return q[s * n_actions + a]; }
  double adv_at(std::size_t s, std::size_t a) const { return adv[s * n_actions + a]; }
  std::span<const double> adv_row(std::size_t s) const {
    return {adv.data() + s * n_actions, n_actions};
  }
  /// max_{s,a} |A(s,a)|
  double max_abs_advantage() const noexcept;
};

/// Unnormalized discounted visitation frequency rho(s) = sum_t gamma^t Pr(s_t = s).
struct VisitationTable {
  std::vector<double> rho;

  double mass() const noexcept;
};

/// Everything the bound and heterogeneity code needs about pi on one MDP.
struct PolicyEvaluation {
  ValueTables values;
  VisitationTable visitation;
  double eta = 0.0;
};

ValueTables policy_evaluation(const FiniteMdp& mdp, const TabularPolicy& policy);
VisitationTable visitation_frequency(const FiniteMdp& mdp, const TabularPolicy& policy);

/// eta = mu . V, cross-checked against sum_s rho(s) sum_a pi(a|s) R(s,a).
double expected_return(const FiniteMdp& mdp, const TabularPolicy& policy);

PolicyEvaluation evaluate(const FiniteMdp& mdp, const TabularPolicy& policy);

/// Policy advantage of `cand` over `base`: sum_s rho_base(s) sum_a cand(a|s) A_base(s,a).
double policy_advantage(const FiniteMdp& mdp, const TabularPolicy& base, const TabularPolicy& cand);
double policy_advantage(const PolicyEvaluation& base, const TabularPolicy& cand);

/// Same quantity evaluated as Tr(D A Pi^T) with explicit matrices.
double policy_advantage_trace(const PolicyEvaluation& base, const TabularPolicy& cand);

/// Throws ShapeError unless the policy table matches the MDP's state/action counts.
void check_shapes(const FiniteMdp& mdp, const TabularPolicy& policy);

/// {"n_states","n_actions","gamma","mu","reward","transition"} with 17 significant digits.
std::string mdp_to_json(const FiniteMdp& mdp);
FiniteMdp mdp_from_json(std::string_view text);

/// A JSON array of MDP documents.
std::string family_to_json(std::span<const FiniteMdp> family);
std::vector<FiniteMdp> family_from_json(std::string_view text);

}  // namespace fedkl
