#include "fedkl/federation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fmt/format.h>
#include <json.hpp>
#include <numeric>
#include <thread>

#include "fedkl/divergence.hpp"
#include "fedkl/error.hpp"
#include "fedkl/rng.hpp"

namespace fedkl {

std::string_view algorithm_name(Algorithm algorithm) noexcept {
  switch (algorithm) {
    case Algorithm::ExactTabular: return "exact-tabular";
    case Algorithm::FedKL: return "fedkl";
    case Algorithm::FedAvg: return "fedavg";
    case Algorithm::FedProx: return "fedprox";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::ExactTabular, Algorithm::FedKL, Algorithm::FedAvg, Algorithm::FedProx}) {
    if (algorithm_name(a) == name) return a;
  }
  throw ConfigError(fmt::format("unknown algorithm '{}'", name));
}

void FedConfig::validate() const {
  if (n_agents == 0) throw ConfigError("n_agents must be positive");
  if (participants == 0 || participants > n_agents) throw ConfigError("participants must be in [1, n_agents]");
  if (timesteps == 0) throw ConfigError("timesteps must be positive");
  if (workers == 0) throw ConfigError("workers must be positive");
  if (!weights.empty()) {
    if (weights.size() != n_agents) throw ConfigError("weights must have one entry per agent");
    double total = 0.0;
    for (double q : weights) {
      if (!(q >= 0.0) || !std::isfinite(q)) throw ConfigError("weights must be non-negative");
      total += q;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("weights must sum to 1");
  }
  const auto& p = penalty;
  if (!(p.d_local > 0.0) || !(p.d_global > 0.0)) throw ConfigError("d_local and d_global must be positive");
  if (!(p.c1_init >= 0.0) || !(p.c2_init > 0.0)) throw ConfigError("initial c1 must be non-negative and c2 positive");
  if (!(p.fedprox_mu >= 0.0)) throw ConfigError("fedprox mu must be non-negative");
}

std::vector<double> FedConfig::resolved_weights() const {
  if (!weights.empty()) return weights;
  return std::vector<double>(n_agents, 1.0 / static_cast<double>(n_agents));
}

std::vector<double> FedHistory::global_returns() const {
  std::vector<double> out;
  out.reserve(rounds.size());
  for (const auto& r : rounds) out.push_back(r.eta_global);
  return out;
}

std::string history_csv(const FedHistory& history) {
  std::string out = "round,eta_global,agent,eta_local,h_value,b_norm,g_scaled\n";
  for (const auto& r : history.rounds) {
    if (r.agents.empty()) {
      out += fmt::format("{},{:.12g},,,,,\n", r.round, r.eta_global);
      continue;
    }
    for (const auto& a : r.agents) {
      out += fmt::format("{},{:.12g},{},{:.12g},{:.12g},{:.12g},{:.12g}\n", r.round, r.eta_global, a.agent,
                         a.eta_local, a.h_value, a.b_norm, a.g_scaled);
    }
  }
  return out;
}

std::string iteration_stats_csv(const FedHistory& history) {
  std::string out =
      "round,agent,iteration,mean_local_kl,mean_global_sqrtkl,c1,c2,surrogate,mean_advantage,value_loss\n";
  for (const auto& r : history.rounds) {
    for (const auto& a : r.agents) {
      for (const auto& it : a.iterations) {
        out += fmt::format("{},{},{},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g}{}\n", r.round,
                           a.agent, it.iteration, it.mean_local_kl, it.mean_global_sqrtkl, it.c1, it.c2,
                           it.surrogate, it.mean_advantage, it.value_loss, it.aborted ? ",aborted" : "");
      }
    }
  }
  return out;
}

std::string history_summary_json(const FedHistory& history) {
  nlohmann::json doc;
  doc["algorithm"] = std::string(algorithm_name(history.algorithm));
  doc["rounds"] = history.rounds.empty() ? 0 : history.rounds.size() - 1;
  const auto etas = history.global_returns();
  doc["eta_global"] = etas;
  auto& mc = doc["eta_global_mc"] = nlohmann::json::array();
  for (const auto& r : history.rounds) {
    if (std::isnan(r.eta_global_mc)) {
      mc.push_back(nullptr);
    } else {
      mc.push_back(r.eta_global_mc);
    }
  }
  if (!etas.empty()) {
    const auto peak = std::max_element(etas.begin(), etas.end());
    doc["initial_eta"] = etas.front();
    doc["final_eta"] = etas.back();
    doc["peak_eta"] = *peak;
    doc["peak_round"] = static_cast<std::size_t>(peak - etas.begin());
    double worst = 0.0;
    for (std::size_t t = 1; t < etas.size(); ++t) worst = std::min(worst, etas[t] - etas[t - 1]);
    doc["worst_round_change"] = worst;
  }
  return doc.dump(2);
}

// --- local objective -------------------------------------------------------

double local_objective(const PolicyEvaluation& global_eval, const PenaltyCoefficients& coeffs,
                       const TabularPolicy& global, const TabularPolicy& candidate) {
  const double adv = policy_advantage(global_eval, candidate);
  const double tv = weighted_tv(global_eval.visitation.rho, global, candidate);
  return adv - (coeffs.alpha + coeffs.beta) * tv - coeffs.delta * max_tv(global, candidate);
}

void project_to_simplex(std::span<double> v) {
  if (v.empty()) return;
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  double total = 0.0;
  for (double& x : v) {
    x = std::max(x - theta, 0.0);
    total += x;
  }
  for (double& x : v) x /= total;
}

namespace {

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

class LocalSearch {
 public:
  LocalSearch(const PolicyEvaluation& eval, const PenaltyCoefficients& coeffs, const TabularPolicy& global)
      : eval_(eval), coeffs_(coeffs), global_(global), S_(global.n_states()), A_(global.n_actions()) {}

  double value(const std::vector<double>& probs) const {
    return local_objective(eval_, coeffs_, global_, TabularPolicy(S_, A_, probs));
  }

  /// Per-state optimum of the rho-weighted terms alone: shift the mass of every action
  /// whose advantage gap to the best action exceeds alpha + beta.
  std::vector<double> separable_solution() const {
    std::vector<double> out(global_.probs().begin(), global_.probs().end());
    const double penalty = coeffs_.alpha + coeffs_.beta;
    for (std::size_t s = 0; s < S_; ++s) {
      const auto adv = eval_.values.adv_row(s);
      const std::size_t best = static_cast<std::size_t>(std::max_element(adv.begin(), adv.end()) - adv.begin());
      for (std::size_t a = 0; a < A_; ++a) {
        if (a != best && adv[best] - adv[a] > penalty) {
          out[s * A_ + best] += out[s * A_ + a];
          out[s * A_ + a] = 0.0;
        }
      }
    }
    return out;
  }

  /// Best point on the segment from the broadcast policy to `target`, by bisection of the step.
  std::pair<std::vector<double>, double> line_search(const std::vector<double>& target) const {
    std::vector<double> best(global_.probs().begin(), global_.probs().end());
    double best_h = 0.0;
    double t = 1.0;
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      std::vector<double> p(best.size());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = (1.0 - t) * global_.probs()[i] + t * target[i];
      const double h = value(p);
      if (h > best_h) {
        best_h = h;
        best = std::move(p);
      }
    }
    return {best, best_h};
  }

  std::vector<double> subgradient(const std::vector<double>& probs) const {
    const auto& rho = eval_.visitation.rho;
    const auto base = global_.probs();
    std::vector<double> g(probs.size(), 0.0);
    std::vector<double> tv(S_, 0.0);
    for (std::size_t s = 0; s < S_; ++s) {
      for (std::size_t a = 0; a < A_; ++a) tv[s] += 0.5 * std::abs(probs[s * A_ + a] - base[s * A_ + a]);
    }
    const double tv_max = *std::max_element(tv.begin(), tv.end());
    std::size_t ties = 0;
    for (double x : tv) ties += (x >= tv_max - 1e-15) ? 1 : 0;
    const double share = coeffs_.delta / static_cast<double>(ties);
    for (std::size_t s = 0; s < S_; ++s) {
      const bool tied = tv[s] >= tv_max - 1e-15 && tv_max > 0.0;
      for (std::size_t a = 0; a < A_; ++a) {
        const std::size_t i = s * A_ + a;
        const double dtv = 0.5 * sign_of(probs[i] - base[i]);
        g[i] = rho[s] * eval_.values.adv_at(s, a) - (coeffs_.alpha + coeffs_.beta) * rho[s] * dtv;
        if (tied) g[i] -= share * dtv;
      }
    }
    return g;
  }

  std::pair<std::vector<double>, double> ascend(std::vector<double> start, std::size_t steps) const {
    std::vector<double> best = start;
    double best_h = value(start);
    std::vector<double> p = std::move(start);
    double scale = 0.0;
    for (double x : subgradient(p)) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return {best, best_h};
    const double step0 = 0.5 / scale;
    for (std::size_t k = 0; k < steps; ++k) {
      const auto g = subgradient(p);
      const double step = step0 / std::sqrt(static_cast<double>(k + 1));
      for (std::size_t i = 0; i < p.size(); ++i) p[i] += step * g[i];
      for (std::size_t s = 0; s < S_; ++s) project_to_simplex(std::span<double>(p.data() + s * A_, A_));
      const double h = value(p);
      if (h > best_h) {
        best_h = h;
        best = p;
      }
    }
    return {best, best_h};
  }

  std::vector<double> perturbed(RngStream& rng) const {
    std::vector<double> p(global_.probs().begin(), global_.probs().end());
    const double mix = 0.1 * rng.uniform();
    for (std::size_t s = 0; s < S_; ++s) {
      std::vector<double> noise(A_);
      double total = 0.0;
      for (auto& x : noise) total += (x = -std::log(1.0 - rng.uniform()));
      for (std::size_t a = 0; a < A_; ++a) p[s * A_ + a] = (1.0 - mix) * p[s * A_ + a] + mix * noise[a] / total;
    }
    return p;
  }

 private:
  const PolicyEvaluation& eval_;
  PenaltyCoefficients coeffs_;
  const TabularPolicy& global_;
  std::size_t S_;
  std::size_t A_;
};

}  // namespace

LocalSolution optimize_local_objective(const PolicyEvaluation& global_eval, const PenaltyCoefficients& coeffs,
                                       const TabularPolicy& global, const LocalOptimizerOptions& options) {
  if (global_eval.values.n_states != global.n_states() || global_eval.values.n_actions != global.n_actions()) {
    throw ShapeError("evaluation and policy shapes differ");
  }
  LocalSearch search(global_eval, coeffs, global);
  std::vector<double> best(global.probs().begin(), global.probs().end());
  double best_h = 0.0;
  auto consider = [&](std::pair<std::vector<double>, double> candidate) {
    if (candidate.second > best_h) {
      best_h = candidate.second;
      best = std::move(candidate.first);
    }
  };

  consider(search.line_search(search.separable_solution()));
  RngStream rng(options.seed);
  for (std::size_t r = 0; r < options.restarts; ++r) {
    std::vector<double> start;
    if (r == 0) {
      start.assign(global.probs().begin(), global.probs().end());
    } else if (r == 1) {
      start = best;
    } else {
      start = search.perturbed(rng);
    }
    consider(search.ascend(std::move(start), options.steps));
  }

  if (!(best_h > kMinLocalGain)) return {global, 0.0};
  // Re-normalize rows so the result satisfies the policy invariant exactly.
  const std::size_t A = global.n_actions();
  for (std::size_t s = 0; s < global.n_states(); ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < A; ++a) total += best[s * A + a];
    for (std::size_t a = 0; a < A; ++a) best[s * A + a] /= total;
  }
  TabularPolicy policy(global.n_states(), A, std::move(best));
  const double h = local_objective(global_eval, coeffs, global, policy);
  if (!(h > kMinLocalGain)) return {global, 0.0};
  return {std::move(policy), h};
}

LocalSolution optimize_local_objective(const FiniteMdp& mdp, const PenaltyCoefficients& coeffs,
                                       const TabularPolicy& global, const LocalOptimizerOptions& options) {
  return optimize_local_objective(evaluate(mdp, global), coeffs, global, options);
}

// --- aggregation -------------------------------------------------------------

TabularPolicy aggregate_policies(std::span<const TabularPolicy> policies, std::span<const double> weights) {
  if (policies.empty()) throw ShapeError("no policies to aggregate");
  if (weights.size() != policies.size()) throw ShapeError("one weight per policy required");
  const std::size_t S = policies[0].n_states();
  const std::size_t A = policies[0].n_actions();
  double total = 0.0;
  for (double q : weights) {
    if (!(q >= 0.0)) throw ValidationError("aggregation weights must be non-negative");
    total += q;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("aggregation weights must sum to 1");
  std::vector<double> out(S * A, 0.0);
  for (std::size_t k = 0; k < policies.size(); ++k) {
    if (policies[k].n_states() != S || policies[k].n_actions() != A) throw ShapeError("policy shapes differ");
    const auto p = policies[k].probs();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] * p[i];
  }
  // Weights summing to 1 only within 1e-9 would leave rows off by as much; rescale.
  for (std::size_t s = 0; s < S; ++s) {
    double row = 0.0;
    for (std::size_t a = 0; a < A; ++a) row += out[s * A + a];
    for (std::size_t a = 0; a < A; ++a) out[s * A + a] /= row;
  }
  return TabularPolicy(S, A, std::move(out));
}

std::vector<double> aggregate_parameters(std::span<const std::vector<double>> params,
                                         std::span<const double> sample_counts) {
  if (params.empty()) throw ShapeError("no parameter vectors to aggregate");
  if (sample_counts.size() != params.size()) throw ShapeError("one sample count per parameter vector required");
  double total = 0.0;
  for (double l : sample_counts) {
    if (!(l > 0.0)) throw ValidationError("sample counts must be positive");
    total += l;
  }
  std::vector<double> out(params[0].size(), 0.0);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != out.size()) throw ShapeError("parameter vectors differ in length");
    const double w = sample_counts[k] / total;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * params[k][i];
  }
  return out;
}

std::vector<std::size_t> select_agents(std::size_t n_agents, std::size_t k, std::size_t round,
                                       std::uint64_t master_seed) {
  if (k == 0 || k > n_agents) throw ConfigError("participants must be in [1, n_agents]");
  std::vector<std::size_t> idx(n_agents);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k == n_agents) return idx;
  RngStream rng(mix_seed({master_seed, 0x73656c656374ULL, round}));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n_agents - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double global_return(std::span<const FiniteMdp> family, std::span<const double> weights,
                     const TabularPolicy& policy) {
  if (weights.size() != family.size()) throw ShapeError("one weight per agent required");
  double eta = 0.0;
  for (std::size_t k = 0; k < family.size(); ++k) eta += weights[k] * expected_return(family[k], policy);
  return eta;
}

// --- exact federated policy iteration ---------------------------------------------

namespace {

template <class Fn>
void run_parallel(std::size_t n_tasks, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n_tasks));
  if (workers == 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n_tasks; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

FedHistory run_federated_policy_iteration(const FedConfig& config, std::span<const FiniteMdp> family,
                                          std::optional<TabularPolicy> initial, TabularPolicy* final_policy) {
  config.validate();
  if (config.algorithm != Algorithm::ExactTabular) throw ConfigError("federated policy iteration needs exact-tabular");
  if (family.size() != config.n_agents) throw ConfigError("family size differs from n_agents");
  if (config.participants != config.n_agents) throw ConfigError("exact-tabular runs with full participation");
  const auto weights = config.resolved_weights();
  const std::size_t S = family[0].n_states();
  const std::size_t A = family[0].n_actions();

  TabularPolicy pi = initial.value_or(TabularPolicy::uniform(S, A));
  FedHistory history;
  history.algorithm = config.algorithm;

  for (std::size_t t = 0;; ++t) {
    const auto evals = evaluate_family(family, pi);
    RoundRecord record;
    record.round = t;
    for (std::size_t k = 0; k < evals.size(); ++k) record.eta_global += weights[k] * evals[k].eta;
    if (t == config.rounds) {
      history.rounds.push_back(std::move(record));
      break;
    }

    const auto report = heterogeneity_report(std::span<const PolicyEvaluation>(evals), weights, family[0].gamma());
    std::vector<TabularPolicy> uploads(config.n_agents, pi);
    record.agents.resize(config.n_agents);
    run_parallel(config.n_agents, config.workers, [&](std::size_t n) {
      const auto& agent = report.agents[n];
      const PenaltyCoefficients coeffs{agent.alpha, report.beta, agent.delta};
      LocalOptimizerOptions options;
      options.seed = mix_seed({config.master_seed, n, t});
      auto solution = optimize_local_objective(evals[n], coeffs, pi, options);
      auto& rec = record.agents[n];
      rec.agent = n;
      rec.eta_local = expected_return(family[n], solution.policy);
      rec.h_value = solution.h_value;
      rec.b_norm = agent.b_norm;
      rec.g_scaled = agent.g_scaled;
      uploads[n] = std::move(solution.policy);
    });
    if (config.track_heterogeneity) record.heterogeneity = report;
    history.rounds.push_back(std::move(record));
    pi = aggregate_policies(uploads, weights);
  }
  if (final_policy) *final_policy = pi;
  return history;
}

}  // namespace fedkl
