#include "fedkl/hetero.hpp"

#include <cmath>
#include <fmt/format.h>
#include <json.hpp>

#include "fedkl/error.hpp"

namespace fedkl {

namespace {

void check_weights(std::span<const double> weights, std::size_t n_agents) {
  if (weights.size() != n_agents) throw ShapeError("one weight per agent required");
  double total = 0.0;
  for (double q : weights) {
    if (!(q >= 0.0)) throw ValidationError("agent weights must be non-negative");
    total += q;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("agent weights must sum to 1");
}

void check_family(std::span<const PolicyEvaluation> evals) {
  if (evals.empty()) throw ShapeError("empty family");
  for (const auto& e : evals) {
    if (e.values.n_states != evals[0].values.n_states || e.values.n_actions != evals[0].values.n_actions) {
      throw ShapeError("family members differ in state/action counts");
    }
  }
}

}  // namespace

std::vector<PolicyEvaluation> evaluate_family(std::span<const FiniteMdp> family, const TabularPolicy& policy) {
  std::vector<PolicyEvaluation> out;
  out.reserve(family.size());
  for (const auto& mdp : family) out.push_back(evaluate(mdp, policy));
  return out;
}

std::vector<double> heterogeneity_matrix(std::span<const PolicyEvaluation> evals, std::span<const double> weights,
                                         std::size_t n) {
  check_family(evals);
  check_weights(weights, evals.size());
  if (n >= evals.size()) throw ShapeError("agent index out of range");
  const std::size_t S = evals[0].values.n_states;
  const std::size_t A = evals[0].values.n_actions;
  const auto& rho_n = evals[n].visitation.rho;
  for (std::size_t s = 0; s < S; ++s) {
    if (!(rho_n[s] > kReachabilityTolerance)) throw UnreachableStateError(n, s, rho_n[s]);
  }
  std::vector<double> b(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      double mixed = 0.0;
      for (std::size_t k = 0; k < evals.size(); ++k) {
        mixed += weights[k] * (evals[k].visitation.rho[s] / rho_n[s]) * evals[k].values.adv_at(s, a);
      }
      b[s * A + a] = mixed - evals[n].values.adv_at(s, a);
    }
  }
  return b;
}

std::vector<double> heterogeneity_matrix(std::span<const FiniteMdp> family, std::span<const double> weights,
                                         const TabularPolicy& policy, std::size_t n) {
  const auto evals = evaluate_family(family, policy);
  return heterogeneity_matrix(std::span<const PolicyEvaluation>(evals), weights, n);
}

double trpo_constant(double epsilon, double gamma) noexcept {
  return 4.0 * epsilon * gamma / ((1.0 - gamma) * (1.0 - gamma));
}

double frobenius_norm(std::span<const double> m) noexcept {
  double ss = 0.0;
  for (double x : m) ss += x * x;
  return std::sqrt(ss);
}

double scaled_frobenius_norm(std::span<const double> rho, std::span<const double> m, std::size_t n_actions) noexcept {
  double ss = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double x = rho[i / n_actions] * m[i];
    ss += x * x;
  }
  return std::sqrt(ss);
}

HeterogeneityReport heterogeneity_report(std::span<const PolicyEvaluation> evals, std::span<const double> weights,
                                         double gamma) {
  check_family(evals);
  check_weights(weights, evals.size());
  const std::size_t N = evals.size();
  const std::size_t A = evals[0].values.n_actions;

  HeterogeneityReport report;
  report.weights.assign(weights.begin(), weights.end());
  report.gamma = gamma;

  std::vector<double> constants(N);
  for (std::size_t k = 0; k < N; ++k) {
    constants[k] = trpo_constant(evals[k].values.max_abs_advantage(), gamma);
    report.beta += weights[k] * constants[k];
  }

  report.agents.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    const auto b = heterogeneity_matrix(evals, weights, n);
    const auto& rho_n = evals[n].visitation.rho;
    AgentHeterogeneity h;
    h.agent = n;
    h.b_norm = frobenius_norm(b);
    h.a_norm = frobenius_norm(evals[n].values.adv);
    h.g_scaled = scaled_frobenius_norm(rho_n, evals[n].values.adv, A) - scaled_frobenius_norm(rho_n, b, A);
    h.alpha = 2.0 * h.b_norm;
    h.epsilon = evals[n].values.max_abs_advantage();
    for (std::size_t k = 0; k < N; ++k) {
      // D_TV between unnormalized visitation vectors.
      double l1 = 0.0;
      for (std::size_t s = 0; s < rho_n.size(); ++s) l1 += std::abs(evals[k].visitation.rho[s] - rho_n[s]);
      h.delta += 2.0 * weights[k] * constants[k] * (0.5 * l1);
    }
    report.agents.push_back(h);
  }
  return report;
}

HeterogeneityReport heterogeneity_report(std::span<const FiniteMdp> family, std::span<const double> weights,
                                         const TabularPolicy& policy) {
  if (family.empty()) throw ShapeError("empty family");
  const auto evals = evaluate_family(family, policy);
  return heterogeneity_report(std::span<const PolicyEvaluation>(evals), weights, family[0].gamma());
}

std::string heterogeneity_csv_header() { return "round,agent,b_norm,a_norm,g_scaled,alpha,beta,delta\n"; }

std::string heterogeneity_csv_rows(const HeterogeneityReport& report, std::size_t round) {
  std::string out;
  for (const auto& a : report.agents) {
    out += fmt::format("{},{},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g}\n", round, a.agent, a.b_norm, a.a_norm,
                       a.g_scaled, a.alpha, report.beta, a.delta);
  }
  return out;
}

std::string heterogeneity_to_json(const HeterogeneityReport& report) {
  nlohmann::json doc;
  doc["gamma"] = report.gamma;
  doc["beta"] = report.beta;
  doc["weights"] = report.weights;
  auto& agents = doc["agents"] = nlohmann::json::array();
  for (const auto& a : report.agents) {
    agents.push_back({{"agent", a.agent},
                      {"b_norm", a.b_norm},
                      {"a_norm", a.a_norm},
                      {"g_scaled", a.g_scaled},
                      {"alpha", a.alpha},
                      {"delta", a.delta},
                      {"epsilon", a.epsilon}});
  }
  return doc.dump(2);
}

}  // namespace fedkl
