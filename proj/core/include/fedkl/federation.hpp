#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedkl/hetero.hpp"
#include "fedkl/mdp.hpp"

namespace fedkl {

enum class Algorithm { ExactTabular, FedKL, FedAvg, FedProx };

std::string_view algorithm_name(Algorithm algorithm) noexcept;
/// Accepts "exact-tabular", "fedkl", "fedavg", "fedprox"; throws ConfigError otherwise.
Algorithm parse_algorithm(std::string_view name);

struct PenaltySettings {
  double d_local = 0.01;
  double d_global = 0.05;
  double c1_init = 1.0;
  double c2_init = 1.0;
  double fedprox_mu = 0.02;
};

struct FedConfig {
  std::size_t n_agents = 1;
  std::size_t participants = 1;      // K
  std::size_t local_iterations = 1;  // I
  std::size_t timesteps = 256;       // T
  std::size_t epochs = 4;            // E
  std::vector<double> weights;       // q_n; empty means uniform
  std::size_t rounds = 10;
  std::uint64_t master_seed = 0;
  Algorithm algorithm = Algorithm::ExactTabular;
  PenaltySettings penalty;
  std::size_t workers = 1;
  bool track_heterogeneity = true;

  /// Throws ConfigError when K, N, q or the penalty targets are out of range.
  void validate() const;
  /// q, filled with 1/N when not configured.
  std::vector<double> resolved_weights() const;
};

// --- history -------------------------------------------------------------

struct IterationStats {
  std::size_t iteration = 0;
  double mean_local_kl = 0.0;
  double mean_global_sqrtkl = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double surrogate = 0.0;
  double mean_advantage = 0.0;
  double value_loss = 0.0;
  bool aborted = false;
};

struct AgentRoundRecord {
  std::size_t agent = 0;
  double eta_local = 0.0;  // exact return of the agent's uploaded policy on its own MDP
  double h_value = std::numeric_limits<double>::quiet_NaN();
  double b_norm = std::numeric_limits<double>::quiet_NaN();
  double g_scaled = std::numeric_limits<double>::quiet_NaN();
  double c1 = 0.0;
  double c2 = 0.0;
  std::vector<IterationStats> iterations;
};

/// Entry t holds eta(pi^t) and the agent updates computed from pi^t.
struct RoundRecord {
  std::size_t round = 0;
  double eta_global = 0.0;
  double eta_global_mc = std::numeric_limits<double>::quiet_NaN();
  std::vector<AgentRoundRecord> agents;
  std::optional<HeterogeneityReport> heterogeneity;
};

struct FedHistory {
  Algorithm algorithm = Algorithm::ExactTabular;
  std::vector<RoundRecord> rounds;

  std::vector<double> global_returns() const;
};

/// round, eta_global, agent, eta_local, h_value, b_norm, g_scaled
std::string history_csv(const FedHistory& history);
/// round, agent, iteration, mean_local_kl, mean_global_sqrtkl, c1, c2, surrogate, mean_advantage, value_loss
std::string iteration_stats_csv(const FedHistory& history);
std::string history_summary_json(const FedHistory& history);

// --- exact tabular federation ---------------------------------------------

struct PenaltyCoefficients {
  double alpha = 0.0;
  double beta = 0.0;
  double delta = 0.0;
};

/**
 * h(pi'; pi) = A_pi(pi') - (alpha + beta) sum_s rho(s) D_TV(s) - delta max_s D_TV(s),
 * evaluated from the agent's exact rho and A under the broadcast policy.
 */
double local_objective(const PolicyEvaluation& global_eval, const PenaltyCoefficients& coeffs,
                       const TabularPolicy& global, const TabularPolicy& candidate);

/// Candidates must beat the broadcast policy (h = 0) by more than rounding noise.
inline constexpr double kMinLocalGain = 1e-12;

struct LocalOptimizerOptions {
  std::size_t steps = 200;
  std::size_t restarts = 3;
  std::uint64_t seed = 0;
};

struct LocalSolution {
  TabularPolicy policy;
  double h_value = 0.0;
};

/// Projected subgradient ascent on per-state simplices. Returns the broadcast policy
/// (h = 0) unless a candidate with h > kMinLocalGain was found.
LocalSolution optimize_local_objective(const FiniteMdp& mdp, const PenaltyCoefficients& coeffs,
                                       const TabularPolicy& global,
                                       const LocalOptimizerOptions& options = {});
LocalSolution optimize_local_objective(const PolicyEvaluation& global_eval,
                                       const PenaltyCoefficients& coeffs,
                                       const TabularPolicy& global,
                                       const LocalOptimizerOptions& options = {});

/// Euclidean projection onto the probability simplex.
void project_to_simplex(std::span<double> v);

/// pi(a|s) = sum_k q_k pi_k(a|s)
TabularPolicy aggregate_policies(std::span<const TabularPolicy> policies,
                                 std::span<const double> weights);

/// theta = sum_k (l_k / L) theta_k
std::vector<double> aggregate_parameters(std::span<const std::vector<double>> params,
                                         std::span<const double> sample_counts);

/// K of N agents, uniformly without replacement, sorted; a function of (seed, round) only.
std::vector<std::size_t> select_agents(std::size_t n_agents, std::size_t k, std::size_t round,
                                       std::uint64_t master_seed);

/// Federated policy iteration with exact coefficients and full participation.
FedHistory run_federated_policy_iteration(const FedConfig& config,
                                          std::span<const FiniteMdp> family,
                                          std::optional<TabularPolicy> initial = std::nullopt,
                                          TabularPolicy* final_policy = nullptr);

/// q-weighted exact return of one policy over the family.
double global_return(std::span<const FiniteMdp> family, std::span<const double> weights,
                     const TabularPolicy& policy);

}  // namespace fedkl
