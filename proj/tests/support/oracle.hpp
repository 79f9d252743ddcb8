#pragma once

// Slow, independent reference computations. Nothing here calls the solvers under test;
// MDP and policy objects are only read through their table accessors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include <fedkl/mdp.hpp>

namespace oracle {

using fedkl::FiniteMdp;
using fedkl::TabularPolicy;

inline double reward_pi(const FiniteMdp& m, const TabularPolicy& pi, std::size_t s) {
  double r = 0.0;
  for (std::size_t a = 0; a < m.n_actions(); ++a) r += pi(s, a) * m.reward(s, a);
  return r;
}

inline double p_pi(const FiniteMdp& m, const TabularPolicy& pi, std::size_t s, std::size_t next) {
  double p = 0.0;
  for (std::size_t a = 0; a < m.n_actions(); ++a) p += pi(s, a) * m.transition(s, a, next);
  return p;
}

/// Jacobi value iteration until the sup-norm change drops below 1e-14.
inline std::vector<double> values(const FiniteMdp& m, const TabularPolicy& pi) {
  const std::size_t S = m.n_states();
  std::vector<double> v(S, 0.0), next(S);
  for (int it = 0; it < 200000; ++it) {
    double change = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      double x = reward_pi(m, pi, s);
      for (std::size_t t = 0; t < S; ++t) x += m.gamma() * p_pi(m, pi, s, t) * v[t];
      next[s] = x;
      change = std::max(change, std::abs(x - v[s]));
    }
    v.swap(next);
    if (change < 1e-14) break;
  }
  return v;
}

inline std::vector<double> q_values(const FiniteMdp& m, const std::vector<double>& v) {
  const std::size_t S = m.n_states(), A = m.n_actions();
  std::vector<double> q(S * A);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      double x = m.reward(s, a);
      for (std::size_t t = 0; t < S; ++t) x += m.gamma() * m.transition(s, a, t) * v[t];
      q[s * A + a] = x;
    }
  }
  return q;
}

inline std::vector<double> advantages(const FiniteMdp& m, const TabularPolicy& pi) {
  const auto v = values(m, pi);
  auto q = q_values(m, v);
  for (std::size_t s = 0; s < m.n_states(); ++s) {
    for (std::size_t a = 0; a < m.n_actions(); ++a) q[s * m.n_actions() + a] -= v[s];
  }
  return q;
}

/// rho = sum_t gamma^t mu P_pi^t, summed until gamma^t < 1e-17.
inline std::vector<double> visitation(const FiniteMdp& m, const TabularPolicy& pi) {
  const std::size_t S = m.n_states();
  std::vector<double> d(m.init_dist().begin(), m.init_dist().end()), rho(S, 0.0), next(S);
  for (double w = 1.0; w > 1e-17; w *= m.gamma()) {
    for (std::size_t s = 0; s < S; ++s) rho[s] += w * d[s];
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t t = 0; t < S; ++t) next[t] += d[s] * p_pi(m, pi, s, t);
    }
    d.swap(next);
  }
  return rho;
}

inline double eta(const FiniteMdp& m, const TabularPolicy& pi) {
  const auto v = values(m, pi);
  double x = 0.0;
  for (std::size_t s = 0; s < m.n_states(); ++s) x += m.init(s) * v[s];
  return x;
}

/// sum_s rho_base(s) sum_a cand(a|s) A_base(s,a)
inline double policy_advantage(const FiniteMdp& m, const TabularPolicy& base, const TabularPolicy& cand) {
  const auto rho = visitation(m, base);
  const auto adv = advantages(m, base);
  double x = 0.0;
  for (std::size_t s = 0; s < m.n_states(); ++s) {
    for (std::size_t a = 0; a < m.n_actions(); ++a) x += rho[s] * cand(s, a) * adv[s * m.n_actions() + a];
  }
  return x;
}

/// B_n[s][a] = sum_k q_k rho_k(s)/rho_n(s) A_k(s,a) - A_n(s,a), straight from the definition.
inline std::vector<double> b_matrix(const std::vector<FiniteMdp>& family, const std::vector<double>& q,
                                    const TabularPolicy& pi, std::size_t n) {
  const std::size_t S = family[0].n_states(), A = family[0].n_actions();
  std::vector<std::vector<double>> rho, adv;
  for (const auto& m : family) {
    rho.push_back(visitation(m, pi));
    adv.push_back(advantages(m, pi));
  }
  std::vector<double> b(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      double x = -adv[n][s * A + a];
      for (std::size_t k = 0; k < family.size(); ++k) x += q[k] * rho[k][s] / rho[n][s] * adv[k][s * A + a];
      b[s * A + a] = x;
    }
  }
  return b;
}

inline double frobenius(const std::vector<double>& m) {
  double x = 0.0;
  for (double v : m) x += v * v;
  return std::sqrt(x);
}

/// A_t = sum_{l >= 0} (gamma lambda)^l delta_{t+l}, stopping after a terminal step or at the batch end.
inline std::vector<double> gae_double_sum(const std::vector<double>& rewards, const std::vector<double>& v,
                                          const std::vector<double>& v_next, const std::vector<bool>& terminal,
                                          double gamma, double lambda) {
  const std::size_t T = rewards.size();
  std::vector<double> delta(T), out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) delta[t] = rewards[t] + gamma * (terminal[t] ? 0.0 : v_next[t]) - v[t];
  for (std::size_t t = 0; t < T; ++t) {
    double w = 1.0;
    for (std::size_t u = t; u < T; ++u) {
      out[t] += w * delta[u];
      if (terminal[u]) break;
      w *= gamma * lambda;
    }
  }
  return out;
}

/// Central differences of f around x.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), or 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

}  // namespace oracle
