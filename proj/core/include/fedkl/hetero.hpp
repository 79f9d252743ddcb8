#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedkl/mdp.hpp"

namespace fedkl {

/// States with rho below this are treated as unreachable.
inline constexpr double kReachabilityTolerance = 1e-12;

struct AgentHeterogeneity {
  std::size_t agent = 0;
  double b_norm = 0.0;    // ||B_n||_F
  double a_norm = 0.0;    // ||A_n||_F
  double g_scaled = 0.0;  // ||D_n A_n||_F - ||D_n B_n||_F
  double alpha = 0.0;     // 2 ||B_n||_F
  double delta = 0.0;
  double epsilon = 0.0;   // max |A_n(s,a)|
};

/// Heterogeneity level of every agent under one policy, plus the bound coefficients.
struct HeterogeneityReport {
  std::vector<double> weights;
  double gamma = 0.0;
  double beta = 0.0;
  std::vector<AgentHeterogeneity> agents;
};

/// Evaluate the same policy on every member of a family.
std::vector<PolicyEvaluation> evaluate_family(std::span<const FiniteMdp> family,
                                              const TabularPolicy& policy);

/**
 * B_n[s][a] = sum_k q_k (rho_k(s) / rho_n(s)) A_k(s,a) - A_n(s,a), flat state-major.
 * Throws UnreachableStateError if rho_n(s) <= 1e-12 anywhere.
 */
std::vector<double> heterogeneity_matrix(std::span<const FiniteMdp> family,
                                         std::span<const double> weights,
                                         const TabularPolicy& policy, std::size_t n);
std::vector<double> heterogeneity_matrix(std::span<const PolicyEvaluation> evals,
                                         std::span<const double> weights, std::size_t n);

HeterogeneityReport heterogeneity_report(std::span<const FiniteMdp> family,
                                         std::span<const double> weights,
                                         const TabularPolicy& policy);
HeterogeneityReport heterogeneity_report(std::span<const PolicyEvaluation> evals,
                                         std::span<const double> weights, double gamma);

/// 4 eps gamma / (1-gamma)^2, the per-agent constant that builds beta and delta.
double trpo_constant(double epsilon, double gamma) noexcept;

/// Sum of squares, square-rooted.
double frobenius_norm(std::span<const double> m) noexcept;

/// ||diag(rho) M||_F for a flat |S| x |A| matrix.
double scaled_frobenius_norm(std::span<const double> rho, std::span<const double> m,
                             std::size_t n_actions) noexcept;

std::string heterogeneity_csv_header();
std::string heterogeneity_csv_rows(const HeterogeneityReport& report, std::size_t round);
std::string heterogeneity_to_json(const HeterogeneityReport& report);

}  // namespace fedkl
