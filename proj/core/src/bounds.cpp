#include "fedkl/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>

#include "fedkl/divergence.hpp"
#include "fedkl/error.hpp"
#include "fedkl/federation.hpp"
#include "fedkl/hetero.hpp"

namespace fedkl {

BoundCheck make_check(std::string name, double lhs, double rhs, Relation relation) {
  BoundCheck c;
  c.name = std::move(name);
  c.relation = relation;
  c.lhs = lhs;
  c.rhs = rhs;
  c.slack = lhs - rhs;
  if (relation == Relation::AtLeast) {
    c.holds = c.slack >= -kBoundSlackTolerance;
  } else {
    c.holds = std::abs(c.slack) <= kIdentityTolerance;
  }
  return c;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double penalty_sign(const BoundOptions& options) { return options.negate_penalty ? -1.0 : 1.0; }

double weighted_sum(std::span<const double> weights, const std::vector<double>& values) {
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) total += weights[k] * values[k];
  return total;
}

}  // namespace

BoundCheck check_trpo_kl(const FiniteMdp& mdp, const TabularPolicy& pi, const TabularPolicy& next,
                         const BoundOptions& options) {
  const auto base = evaluate(mdp, pi);
  const double eta_next = expected_return(mdp, next);
  const double adv = policy_advantage(base, next);
  const double eps = base.values.max_abs_advantage();
  const double c = trpo_constant(eps, mdp.gamma());
  const double kl_max = max_kl(pi, next);

  const bool infinite = std::isinf(kl_max);
  const double rhs = infinite ? -kInf : adv - penalty_sign(options) * c * kl_max;
  auto check = make_check("trpo_kl", eta_next - base.eta, rhs);
  check.infinite = infinite;
  check.coefficients = {{"c", c}, {"epsilon", eps}, {"kl_max", kl_max}, {"policy_advantage", adv}};
  return check;
}

BoundCheck check_cpo_tv(const FiniteMdp& mdp, const TabularPolicy& pi, const TabularPolicy& next,
                        const BoundOptions& options) {
  const auto base = evaluate(mdp, pi);
  const double eta_next = expected_return(mdp, next);
  const double adv = policy_advantage(base, next);
  const double gamma = mdp.gamma();

  double eps_next = 0.0;  // max_s |E_{a~pi'} A_pi(s,a)|
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    double e = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) e += next(s, a) * base.values.adv_at(s, a);
    eps_next = std::max(eps_next, std::abs(e));
  }
  const double c_cpo = 2.0 * eps_next * gamma / ((1.0 - gamma) * (1.0 - gamma));
  const double c = trpo_constant(base.values.max_abs_advantage(), gamma);
  const double tv = weighted_tv(base.visitation.rho, pi, next);

  auto check = make_check("cpo_tv", eta_next - base.eta, adv - penalty_sign(options) * c_cpo * tv);
  check.coefficients = {{"c_cpo", c_cpo}, {"c", c}, {"weighted_tv", tv}, {"policy_advantage", adv}};
  return check;
}

TrustRegionChecks check_trpo_bound(const FiniteMdp& mdp, const TabularPolicy& pi, const TabularPolicy& next,
                                   const BoundOptions& options) {
  return {check_trpo_kl(mdp, pi, next, options), check_cpo_tv(mdp, pi, next, options)};
}

namespace {

struct FamilyTerms {
  std::vector<PolicyEvaluation> evals;
  HeterogeneityReport report;
};

FamilyTerms family_terms(std::span<const FiniteMdp> family, std::span<const double> weights,
                         const TabularPolicy& pi) {
  FamilyTerms t;
  t.evals = evaluate_family(family, pi);
  t.report = heterogeneity_report(std::span<const PolicyEvaluation>(t.evals), weights, family[0].gamma());
  return t;
}

double lower_bound_from_terms(const FamilyTerms& t, std::span<const double> weights, const TabularPolicy& pi,
                              const TabularPolicy& next, std::size_t n, const BoundOptions& options,
                              std::map<std::string, double>* coefficients) {
  std::vector<double> etas;
  for (const auto& e : t.evals) etas.push_back(e.eta);
  const auto& agent = t.report.agents.at(n);
  const double adv_n = policy_advantage(t.evals[n], next);
  const double tv_n = weighted_tv(t.evals[n].visitation.rho, pi, next);
  const double tv_max = max_tv(pi, next);
  const double sign = penalty_sign(options);
  if (coefficients) {
    *coefficients = {{"alpha", agent.alpha},   {"beta", t.report.beta},    {"delta", agent.delta},
                     {"weighted_tv", tv_n},    {"tv_max", tv_max},         {"policy_advantage", adv_n}};
  }
  return weighted_sum(weights, etas) + adv_n - sign * (agent.alpha + t.report.beta) * tv_n - sign * agent.delta * tv_max;
}

}  // namespace

BoundCheck check_theorem1(std::span<const FiniteMdp> family, std::span<const double> weights,
                          const TabularPolicy& pi, const TabularPolicy& next, std::size_t n,
                          const BoundOptions& options) {
  const auto t = family_terms(family, weights, pi);
  std::vector<double> advs;
  for (const auto& e : t.evals) advs.push_back(policy_advantage(e, next));
  const double alpha = t.report.agents.at(n).alpha;
  const double tv_n = weighted_tv(t.evals[n].visitation.rho, pi, next);
  auto check = make_check("theorem1", weighted_sum(weights, advs), advs[n] - penalty_sign(options) * alpha * tv_n);
  check.coefficients = {{"alpha", alpha},
                        {"b_norm", t.report.agents[n].b_norm},
                        {"weighted_tv", tv_n},
                        {"agent", static_cast<double>(n)}};
  return check;
}

double global_lower_bound(std::span<const FiniteMdp> family, std::span<const double> weights,
                          const TabularPolicy& pi, const TabularPolicy& next, std::size_t n,
                          const BoundOptions& options) {
  const auto t = family_terms(family, weights, pi);
  return lower_bound_from_terms(t, weights, pi, next, n, options, nullptr);
}

BoundCheck check_corollary2(std::span<const FiniteMdp> family, std::span<const double> weights,
                            const TabularPolicy& pi, const TabularPolicy& next, std::size_t n,
                            const BoundOptions& options) {
  const auto t = family_terms(family, weights, pi);
  std::map<std::string, double> coefficients;
  const double g = lower_bound_from_terms(t, weights, pi, next, n, options, &coefficients);
  auto check = make_check("corollary2", global_return(family, weights, next), g);
  check.coefficients = std::move(coefficients);
  check.coefficients["agent"] = static_cast<double>(n);
  return check;
}

BoundCheck check_minorization(std::span<const FiniteMdp> family, std::span<const double> weights,
                              const TabularPolicy& pi, std::size_t n) {
  const auto t = family_terms(family, weights, pi);
  const double g = lower_bound_from_terms(t, weights, pi, pi, n, {}, nullptr);
  auto check = make_check("minorization", global_return(family, weights, pi), g, Relation::Equal);
  check.coefficients = {{"agent", static_cast<double>(n)}};
  return check;
}

BoundCheck check_pinsker(std::span<const double> p, std::span<const double> q, const BoundOptions& options) {
  const double kl = kl_divergence(p, q);
  const double tv = tv_distance(p, q);
  const bool infinite = std::isinf(kl);
  // Injected fault: sqrt(KL/8) in place of sqrt(KL/2).
  const double lhs = infinite ? kInf : std::sqrt((options.negate_penalty ? 0.125 : 0.5) * kl);
  auto check = make_check("pinsker", lhs, tv);
  check.infinite = infinite;
  check.coefficients = {{"kl", kl}, {"tv", tv}};
  return check;
}

BoundCheck check_mixture_tv(std::span<const TabularPolicy> policies, std::span<const double> weights,
                            const TabularPolicy& ref) {
  if (policies.empty() || policies.size() != weights.size()) throw ShapeError("one weight per policy required");
  const auto mixture = aggregate_policies(policies, weights);
  BoundCheck worst;
  bool first = true;
  for (std::size_t s = 0; s < ref.n_states(); ++s) {
    double upper = 0.0;
    for (std::size_t k = 0; k < policies.size(); ++k) upper += weights[k] * tv_distance(ref.row(s), policies[k].row(s));
    auto c = make_check("mixture_tv", upper, tv_distance(ref.row(s), mixture.row(s)));
    if (first || c.slack < worst.slack) {
      worst = std::move(c);
      worst.witness = static_cast<long long>(s);
      first = false;
    }
  }
  worst.coefficients = {{"state", static_cast<double>(worst.witness)},
                        {"n_policies", static_cast<double>(policies.size())}};
  return worst;
}

BoundCheck check_advantage_linearity(const FiniteMdp& mdp, const TabularPolicy& base, const TabularPolicy& first,
                                     const TabularPolicy& second, double mix) {
  const auto ev = evaluate(mdp, base);
  const std::vector<TabularPolicy> parts = {first, second};
  const std::vector<double> w = {mix, 1.0 - mix};
  const auto combined = aggregate_policies(parts, w);
  auto check = make_check("advantage_linearity", policy_advantage(ev, combined),
                          mix * policy_advantage(ev, first) + (1.0 - mix) * policy_advantage(ev, second),
                          Relation::Equal);
  check.coefficients = {{"mix", mix}};
  return check;
}

BoundCheck check_monotone_history(const FedHistory& history) {
  const auto etas = history.global_returns();
  double worst = 0.0;
  long long witness = -1;
  for (std::size_t t = 1; t < etas.size(); ++t) {
    const double diff = etas[t] - etas[t - 1];
    if (witness < 0 || diff < worst) {
      worst = diff;
      witness = static_cast<long long>(t);
    }
  }
  auto check = make_check("monotone_history", witness < 0 ? 0.0 : worst, 0.0);
  check.witness = witness;
  check.coefficients = {{"rounds", static_cast<double>(etas.size())}};
  return check;
}

double penalized_local_advantage(std::span<const FiniteMdp> family, std::span<const double> weights,
                                 const TabularPolicy& pi, const TabularPolicy& next, std::size_t n) {
  const auto t = family_terms(family, weights, pi);
  return policy_advantage(t.evals[n], next) -
         t.report.agents.at(n).alpha * weighted_tv(t.evals[n].visitation.rho, pi, next);
}

std::vector<double> random_distribution(std::size_t n, RngStream& rng, double sharpness) {
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& x : w) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    x = std::pow(-std::log(u), sharpness) + 1e-12;
    total += x;
  }
  for (auto& x : w) x /= total;
  return w;
}

TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions, RngStream& rng, double sharpness) {
  std::vector<double> probs;
  probs.reserve(n_states * n_actions);
  for (std::size_t s = 0; s < n_states; ++s) {
    const auto row = random_distribution(n_actions, rng, sharpness);
    probs.insert(probs.end(), row.begin(), row.end());
  }
  return TabularPolicy(n_states, n_actions, std::move(probs));
}

SweepInstance make_sweep_instance(std::uint64_t seed, const SweepLimits& limits) {
  RngStream rng(mix_seed({seed, 0x5eedb0u}));
  const std::size_t S = 2 + rng.below(std::max<std::size_t>(limits.max_states, 2) - 1);
  const std::size_t A = 2 + rng.below(std::max<std::size_t>(limits.max_actions, 2) - 1);
  const std::size_t N = 1 + rng.below(std::max<std::size_t>(limits.max_agents, 1));
  const double gamma = 0.3 + 0.65 * rng.uniform();
  const double hetero = rng.uniform();

  std::vector<double> reward(S * A);
  for (auto& r : reward) r = 2.0 * rng.uniform() - 0.5;
  std::vector<double> base_p;
  for (std::size_t i = 0; i < S * A; ++i) {
    const auto row = random_distribution(S, rng, 2.0);
    base_p.insert(base_p.end(), row.begin(), row.end());
  }

  SweepInstance inst{seed, {}, {}, TabularPolicy::uniform(S, A), TabularPolicy::uniform(S, A),
                     TabularPolicy::uniform(S, A), 0.5, 0};
  for (std::size_t k = 0; k < N; ++k) {
    std::vector<double> p(S * A * S);
    for (std::size_t i = 0; i < S * A; ++i) {
      const auto own = random_distribution(S, rng, 2.0);
      double total = 0.0;
      for (std::size_t t = 0; t < S; ++t) {
        p[i * S + t] = (1.0 - hetero) * base_p[i * S + t] + hetero * own[t];
        total += p[i * S + t];
      }
      for (std::size_t t = 0; t < S; ++t) p[i * S + t] /= total;
    }
    inst.family.emplace_back(S, A, std::move(p), reward, random_distribution(S, rng, 1.5), gamma);
  }
  inst.weights = random_distribution(N, rng);
  inst.pi = random_policy(S, A, rng, 1.0 + rng.uniform());

  // Half the instances take a small step away from pi, half an arbitrary jump.
  const double step = rng.uniform() < 0.5 ? 0.2 * rng.uniform() : rng.uniform();
  const auto target = random_policy(S, A, rng, 1.0 + 2.0 * rng.uniform());
  std::vector<double> next(S * A);
  for (std::size_t i = 0; i < S * A; ++i) next[i] = (1.0 - step) * inst.pi.probs()[i] + step * target.probs()[i];
  inst.next = TabularPolicy(S, A, std::move(next));
  inst.third = random_policy(S, A, rng);
  inst.mix = rng.uniform();
  inst.agent = rng.below(N);
  return inst;
}

std::vector<SweepRecord> run_bound_sweep(std::size_t n_seeds, std::uint64_t base_seed, const BoundOptions& options,
                                         const SweepLimits& limits) {
  std::vector<SweepRecord> out;
  out.reserve(n_seeds * 9);
  for (std::size_t i = 0; i < n_seeds; ++i) {
    const std::uint64_t seed = base_seed + i;
    const auto inst = make_sweep_instance(seed, limits);
    const auto& mdp = inst.family[inst.agent];
    auto push = [&](BoundCheck c) { out.push_back({seed, std::move(c)}); };

    const auto tr = check_trpo_bound(mdp, inst.pi, inst.next, options);
    push(tr.kl);
    push(tr.tv);
    push(check_theorem1(inst.family, inst.weights, inst.pi, inst.next, inst.agent, options));
    push(check_corollary2(inst.family, inst.weights, inst.pi, inst.next, inst.agent, options));
    push(check_minorization(inst.family, inst.weights, inst.pi, inst.agent));
    push(check_advantage_linearity(mdp, inst.pi, inst.next, inst.third, inst.mix));

    RngStream rng(mix_seed({seed, 0x9145u}));
    const std::size_t atoms = 2 + rng.below(15);
    const auto p = random_distribution(atoms, rng, 1.0 + 2.0 * rng.uniform());
    const auto q = random_distribution(atoms, rng, 1.0 + 2.0 * rng.uniform());
    push(check_pinsker(p, q, options));

    std::vector<TabularPolicy> locals;
    for (std::size_t k = 0; k < inst.weights.size(); ++k) {
      locals.push_back(random_policy(inst.pi.n_states(), inst.pi.n_actions(), rng));
    }
    push(check_mixture_tv(locals, inst.weights, inst.pi));
  }
  return out;
}

std::string sweep_record_to_json(const SweepRecord& record) {
  const auto& c = record.check;
  nlohmann::json doc;
  doc["check"] = c.name;
  doc["seed"] = record.seed;
  doc["lhs"] = c.lhs;  // non-finite values serialize as null
  doc["rhs"] = c.rhs;
  doc["slack"] = c.slack;
  doc["holds"] = c.holds;
  nlohmann::json coeffs = nlohmann::json::object();
  for (const auto& [k, v] : c.coefficients) coeffs[k] = v;
  if (c.infinite) coeffs["kl_infinite"] = 1;
  doc["coefficients"] = std::move(coeffs);
  return doc.dump();
}

}  // namespace fedkl
