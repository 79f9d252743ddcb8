#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedkl/envs.hpp"
#include "fedkl/federation.hpp"
#include "fedkl/network.hpp"

namespace fedkl {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> targets;  // advantage + V(s_t)
};

/**
 * delta_t = r_t + gamma V(s_{t+1}) (1 - terminal_t) - V(s_t);
 * A_t = delta_t + gamma lambda (1 - terminal_t) A_{t+1}, truncated at the batch end.
 */
GaeResult gae_advantages(const TrajectoryBatch& batch, const ValueEstimator& values, double gamma,
                         double lambda);

/// Adaptive KL penalty coefficients; c1 weighs the global term, c2 the local one.
struct PenaltyController {
  double c1 = 1.0;
  double c2 = 1.0;
  double d_local = 0.01;
  double d_global = 0.05;
  double band = 1.1;
  double factor = 2.0;
};

/// The three-phase rule: halve below target/band, double above target*band, else keep.
PenaltyController adapt_coefficients(PenaltyController controller, double measured_local_kl,
                                     double measured_global_sqrtkl);

/// Smoothing inside sqrt(KL/2 + eps) so the global penalty has a finite gradient at KL = 0.
inline constexpr double kSqrtKlSmoothing = 1e-12;

struct SurrogateInputs {
  std::span<const Transition> samples;
  std::span<const double> advantages;  // aligned with samples
  const TabularPolicy* previous = nullptr;  // pi_{i-1}, the behavior policy
  const TabularPolicy* global = nullptr;    // pi^t, the broadcast policy
  double c1 = 0.0;
  double c2 = 0.0;
  double prox_mu = 0.0;
  std::span<const double> prox_anchor;  // theta_global, used when prox_mu > 0
};

struct SurrogateResult {
  double value = 0.0;      // objective that `gradient` differentiates
  double mean_ratio_advantage = 0.0;
  double mean_global_sqrtkl = 0.0;  // un-smoothed
  double mean_local_kl = 0.0;
  std::vector<double> gradient;
};

/**
 * mean_i [ w_i A_i - c1 sqrt(KL(pi^t||pi)/2 + eps) - c2 KL(pi_{i-1}||pi) ] - (mu/2)||theta - theta^t||^2
 * with w_i = pi(a_i|s_i) / pi_{i-1}(a_i|s_i); gradient by reverse accumulation.
 */
SurrogateResult surrogate_objective(const SoftmaxPolicy& policy, const SurrogateInputs& inputs,
                                    bool with_gradient = true);

struct TrainerConfig {
  double learning_rate = 0.1;
  double value_learning_rate = 0.1;
  std::size_t batch_size = 64;
  double lambda = 0.95;
  std::size_t value_epochs = 5;
  Parameterization parameterization = Parameterization::TabularSoftmax;
  std::size_t hidden = 16;
  std::size_t evaluation_episodes = 0;  // Monte-Carlo episodes per agent MDP, 0 disables
  std::size_t evaluation_horizon = 200;

  void validate() const;
};

struct LocalRoundResult {
  SoftmaxPolicy policy;
  std::vector<IterationStats> stats;
  PenaltyController controller;
  bool aborted = false;
};

/// I iterations of sample / fit critic / E epochs of ascent / adapt c1, c2.
LocalRoundResult local_round(const FiniteMdp& mdp, const SoftmaxPolicy& global,
                             ValueEstimator& critic, const FedConfig& config,
                             const TrainerConfig& trainer, PenaltyController controller,
                             RngStream& rng);

struct TrainingRun {
  FedHistory history;
  SoftmaxPolicy final_policy;
};

/// Sampled FedKL, FedAvg or FedProx: select, broadcast, local rounds, average theta.
TrainingRun run_fedkl(const FedConfig& config, const TrainerConfig& trainer,
                      std::span<const FiniteMdp> family);

/// d_global heuristic: margin x mean measured sqrt(KL/2) to the global policy in a c1 = 0 run.
double suggest_d_global(const FedHistory& unpenalized_run, double margin = 1.1);

}  // namespace fedkl
