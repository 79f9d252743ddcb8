#include "fedkl/mdp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <json.hpp>

#include "fedkl/error.hpp"

namespace fedkl {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

void check_distribution(std::span<const double> row, const std::string& what) {
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError(what + " has a negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) {
    throw ValidationError(fmt::format("{} sums to {:.17g}, expected 1", what, sum));
  }
}

// P_pi(s'|s) and r_pi(s), state-major.
void induced_chain(const FiniteMdp& mdp, const TabularPolicy& policy, Matrix& p_pi, Vector& r_pi) {
  const std::size_t S = mdp.n_states();
  const std::size_t A = mdp.n_actions();
  p_pi = Matrix::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
  r_pi = Vector::Zero(static_cast<Eigen::Index>(S));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      const double w = policy(s, a);
      if (w == 0.0) continue;
      r_pi[static_cast<Eigen::Index>(s)] += w * mdp.reward(s, a);
      const auto row = mdp.transition_row(s, a);
      for (std::size_t t = 0; t < S; ++t) p_pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) += w * row[t];
    }
  }
}

// Solves x = b + gamma * M x, with M row-stochastic (or its transpose).
Vector solve_discounted(const Matrix& m, const Vector& b, double gamma, const char* what) {
  const auto n = m.rows();
  auto residual_of = [&](const Vector& x) { return (x - b - gamma * (m * x)).cwiseAbs().maxCoeff(); };

  if (static_cast<std::size_t>(n) <= kDenseSolverLimit) {
    const Matrix lhs = Matrix::Identity(n, n) - gamma * m;
    const Eigen::PartialPivLU<Matrix> lu(lhs);
    Vector x = lu.solve(b);
    double residual = residual_of(x);
    for (int refine = 0; refine < 3 && residual > kSolverResidualTolerance; ++refine) {
      x += lu.solve(b - lhs * x);
      residual = residual_of(x);
    }
    if (!(residual <= kSolverResidualTolerance)) {
      throw InternalError(fmt::format("{}: dense solve residual {:.3e}", what, residual));
    }
    return x;
  }

  Vector x = b;
  const std::size_t max_iters = 1000000;
  for (std::size_t it = 0; it < max_iters; ++it) {
    Vector next = b + gamma * (m * x);
    const double change = (next - x).cwiseAbs().maxCoeff();
    x.swap(next);
    if (change <= 1e-10 * (1.0 - gamma)) break;
  }
  const double residual = residual_of(x);
  if (!(residual <= kSolverResidualTolerance)) {
    throw InternalError(fmt::format("{}: fixed-point residual {:.3e}", what, residual));
  }
  return x;
}

std::string fmt_double(double x) { return fmt::format("{:.17g}", x); }

}  // namespace

FiniteMdp::FiniteMdp(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
                     std::vector<double> reward, std::vector<double> init_dist, double gamma)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      init_dist_(std::move(init_dist)),
      gamma_(gamma) {
  if (n_states_ == 0 || n_actions_ == 0) throw ShapeError("MDP needs at least one state and one action");
  if (transition_.size() != n_states_ * n_actions_ * n_states_) throw ShapeError("transition tensor size mismatch");
  if (reward_.size() != n_states_ * n_actions_) throw ShapeError("reward table size mismatch");
  if (init_dist_.size() != n_states_) throw ShapeError("initial distribution size mismatch");
  if (!(gamma_ > 0.0 && gamma_ < 1.0)) throw ValidationError("gamma must lie in (0, 1)");
  for (double r : reward_) {
    if (!std::isfinite(r)) throw ValidationError("reward table has a non-finite entry");
  }
  for (std::size_t s = 0; s < n_states_; ++s) {
    for (std::size_t a = 0; a < n_actions_; ++a) {
      check_distribution(transition_row(s, a), fmt::format("P(.|s={},a={})", s, a));
    }
  }
  check_distribution(init_dist_, "initial distribution");
}

double FiniteMdp::max_abs_reward() const noexcept {
  double m = 0.0;
  for (double r : reward_) m = std::max(m, std::abs(r));
  return m;
}

TabularPolicy::TabularPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
  if (n_states_ == 0 || n_actions_ == 0) throw ShapeError("policy needs at least one state and one action");
  if (probs_.size() != n_states_ * n_actions_) throw ShapeError("policy table size mismatch");
  for (std::size_t s = 0; s < n_states_; ++s) check_distribution(row(s), fmt::format("pi(.|s={})", s));
}

TabularPolicy TabularPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
  return TabularPolicy(n_states, n_actions,
                       std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions)));
}

TabularPolicy TabularPolicy::deterministic(std::size_t n_actions, std::span<const std::size_t> actions) {
  std::vector<double> probs(actions.size() * n_actions, 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= n_actions) throw ShapeError("action index out of range");
    probs[s * n_actions + actions[s]] = 1.0;
  }
  return TabularPolicy(actions.size(), n_actions, std::move(probs));
}

double ValueTables::max_abs_advantage() const noexcept {
  double m = 0.0;
  for (double x : adv) m = std::max(m, std::abs(x));
  return m;
}

double VisitationTable::mass() const noexcept {
  double total = 0.0;
  for (double r : rho) total += r;
  return total;
}

void check_shapes(const FiniteMdp& mdp, const TabularPolicy& policy) {
  if (mdp.n_states() != policy.n_states() || mdp.n_actions() != policy.n_actions()) {
    throw ShapeError(fmt::format("policy is {}x{} but MDP is {}x{}", policy.n_states(), policy.n_actions(),
                                 mdp.n_states(), mdp.n_actions()));
  }
}

ValueTables policy_evaluation(const FiniteMdp& mdp, const TabularPolicy& policy) {
  check_shapes(mdp, policy);
  Matrix p_pi;
  Vector r_pi;
  induced_chain(mdp, policy, p_pi, r_pi);
  const Vector v = solve_discounted(p_pi, r_pi, mdp.gamma(), "policy_evaluation");

  const std::size_t S = mdp.n_states();
  const std::size_t A = mdp.n_actions();
  ValueTables out;
  out.n_states = S;
  out.n_actions = A;
  out.v.assign(v.data(), v.data() + v.size());
  out.q.resize(S * A);
  out.adv.resize(S * A);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      const auto row = mdp.transition_row(s, a);
      double next = 0.0;
      for (std::size_t t = 0; t < S; ++t) next += row[t] * out.v[t];
      const double q = mdp.reward(s, a) + mdp.gamma() * next;
      out.q[s * A + a] = q;
      out.adv[s * A + a] = q - out.v[s];
    }
  }
  return out;
}

VisitationTable visitation_frequency(const FiniteMdp& mdp, const TabularPolicy& policy) {
  check_shapes(mdp, policy);
  Matrix p_pi;
  Vector r_pi;
  induced_chain(mdp, policy, p_pi, r_pi);
  const Matrix p_t = p_pi.transpose();
  Vector mu(static_cast<Eigen::Index>(mdp.n_states()));
  for (std::size_t s = 0; s < mdp.n_states(); ++s) mu[static_cast<Eigen::Index>(s)] = mdp.init(s);
  const Vector rho = solve_discounted(p_t, mu, mdp.gamma(), "visitation_frequency");
  VisitationTable out;
  out.rho.assign(rho.data(), rho.data() + rho.size());
  return out;
}

namespace {

double reward_weighted_return(const FiniteMdp& mdp, const TabularPolicy& policy, std::span<const double> rho) {
  double total = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    double r = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) r += policy(s, a) * mdp.reward(s, a);
    total += rho[s] * r;
  }
  return total;
}

double init_weighted_value(const FiniteMdp& mdp, std::span<const double> v) {
  double eta = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) eta += mdp.init(s) * v[s];
  return eta;
}

void cross_check_return(double via_values, double via_visitation) {
  if (std::abs(via_values - via_visitation) > 1e-8 * std::max(1.0, std::abs(via_values))) {
    throw InternalError(fmt::format("return mismatch: mu.V = {:.17g}, rho.r_pi = {:.17g}", via_values,
                                    via_visitation));
  }
}

}  // namespace

PolicyEvaluation evaluate(const FiniteMdp& mdp, const TabularPolicy& policy) {
  PolicyEvaluation out;
  out.values = policy_evaluation(mdp, policy);
  out.visitation = visitation_frequency(mdp, policy);
  out.eta = init_weighted_value(mdp, out.values.v);
  cross_check_return(out.eta, reward_weighted_return(mdp, policy, out.visitation.rho));
  return out;
}

double expected_return(const FiniteMdp& mdp, const TabularPolicy& policy) { return evaluate(mdp, policy).eta; }

double policy_advantage(const PolicyEvaluation& base, const TabularPolicy& cand) {
  const auto& vt = base.values;
  if (cand.n_states() != vt.n_states || cand.n_actions() != vt.n_actions) {
    throw ShapeError("candidate policy does not match the evaluated MDP");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < vt.n_states; ++s) {
    double inner = 0.0;
    for (std::size_t a = 0; a < vt.n_actions; ++a) inner += cand(s, a) * vt.adv_at(s, a);
    total += base.visitation.rho[s] * inner;
  }
  return total;
}

double policy_advantage(const FiniteMdp& mdp, const TabularPolicy& base, const TabularPolicy& cand) {
  check_shapes(mdp, cand);
  return policy_advantage(evaluate(mdp, base), cand);
}

double policy_advantage_trace(const PolicyEvaluation& base, const TabularPolicy& cand) {
  const auto S = static_cast<Eigen::Index>(base.values.n_states);
  const auto A = static_cast<Eigen::Index>(base.values.n_actions);
  if (cand.n_states() != base.values.n_states || cand.n_actions() != base.values.n_actions) {
    throw ShapeError("candidate policy does not match the evaluated MDP");
  }
  const Eigen::Map<const Matrix> adv(base.values.adv.data(), S, A);
  const Eigen::Map<const Matrix> pi(cand.probs().data(), S, A);
  const Eigen::Map<const Vector> rho(base.visitation.rho.data(), S);
  const Matrix product = rho.asDiagonal() * adv * pi.transpose();
  return product.trace();
}

std::string mdp_to_json(const FiniteMdp& mdp) {
  const std::size_t S = mdp.n_states();
  const std::size_t A = mdp.n_actions();
  std::string out = fmt::format("{{\"n_states\":{},\"n_actions\":{},\"gamma\":{},\"mu\":[", S, A,
                                fmt_double(mdp.gamma()));
  for (std::size_t s = 0; s < S; ++s) out += (s ? "," : "") + fmt_double(mdp.init(s));
  out += "],\"reward\":[";
  for (std::size_t s = 0; s < S; ++s) {
    out += s ? ",[" : "[";
    for (std::size_t a = 0; a < A; ++a) out += (a ? "," : "") + fmt_double(mdp.reward(s, a));
    out += "]";
  }
  out += "],\"transition\":[";
  for (std::size_t s = 0; s < S; ++s) {
    out += s ? ",[" : "[";
    for (std::size_t a = 0; a < A; ++a) {
      out += a ? ",[" : "[";
      const auto row = mdp.transition_row(s, a);
      for (std::size_t t = 0; t < S; ++t) out += (t ? "," : "") + fmt_double(row[t]);
      out += "]";
    }
    out += "]";
  }
  out += "]}";
  return out;
}

namespace {

FiniteMdp mdp_from_document(const nlohmann::json& doc) {
  try {
    const auto S = doc.at("n_states").get<std::size_t>();
    const auto A = doc.at("n_actions").get<std::size_t>();
    const auto gamma = doc.at("gamma").get<double>();
    auto mu = doc.at("mu").get<std::vector<double>>();
    const auto& reward = doc.at("reward");
    const auto& transition = doc.at("transition");
    if (reward.size() != S || transition.size() != S) throw ShapeError("reward/transition outer size mismatch");
    std::vector<double> r;
    std::vector<double> p;
    r.reserve(S * A);
    p.reserve(S * A * S);
    for (std::size_t s = 0; s < S; ++s) {
      const auto row = reward[s].get<std::vector<double>>();
      if (row.size() != A || transition[s].size() != A) throw ShapeError("reward/transition action size mismatch");
      r.insert(r.end(), row.begin(), row.end());
      for (std::size_t a = 0; a < A; ++a) {
        const auto next = transition[s][a].get<std::vector<double>>();
        if (next.size() != S) throw ShapeError("transition row size mismatch");
        p.insert(p.end(), next.begin(), next.end());
      }
    }
    return FiniteMdp(S, A, std::move(p), std::move(r), std::move(mu), gamma);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed MDP document: ") + e.what());
  }
}

}  // namespace

FiniteMdp mdp_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  return mdp_from_document(doc);
}

std::string family_to_json(std::span<const FiniteMdp> family) {
  std::string out = "[";
  for (std::size_t i = 0; i < family.size(); ++i) {
    if (i) out += ",\n";
    out += mdp_to_json(family[i]);
  }
  out += "]\n";
  return out;
}

std::vector<FiniteMdp> family_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ConfigError("MDP family must be a JSON array");
  std::vector<FiniteMdp> out;
  for (const auto& item : doc) out.push_back(mdp_from_document(item));
  return out;
}

}  // namespace fedkl
