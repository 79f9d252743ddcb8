#include "fedkl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "fedkl/error.hpp"

namespace fedkl {

GaeResult gae_advantages(const TrajectoryBatch& batch, const ValueEstimator& values, double gamma, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
  const std::size_t T = batch.size();
  GaeResult out;
  out.advantages.assign(T, 0.0);
  out.targets.assign(T, 0.0);
  double running = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const auto& step = batch.steps[t];
    const double cont = step.terminal ? 0.0 : 1.0;
    const double v = values.value(step.state);
    const double delta = step.reward + gamma * cont * values.value(step.next_state) - v;
    running = delta + gamma * lambda * cont * (t + 1 < T ? running : 0.0);
    out.advantages[t] = running;
    out.targets[t] = running + v;
  }
  return out;
}

PenaltyController adapt_coefficients(PenaltyController controller, double measured_local_kl,
                                     double measured_global_sqrtkl) {
  if (!(measured_local_kl >= 0.0) || !(measured_global_sqrtkl >= 0.0)) {
    throw ValidationError("measured divergences must be non-negative");
  }
  auto& c = controller;
  if (measured_local_kl < c.d_local / c.band) {
    c.c2 /= c.factor;
  } else if (measured_local_kl > c.d_local * c.band) {
    c.c2 *= c.factor;
  }
  if (measured_global_sqrtkl < c.d_global / c.band) {
    c.c1 /= c.factor;
  } else if (measured_global_sqrtkl > c.d_global * c.band) {
    c.c1 *= c.factor;
  }
  return controller;
}

namespace {

void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - top);
  const double lse = top + std::log(total);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

/// KL(ref || exp(log_p)); terms with ref = 0 contribute nothing.
double kl_from_log(std::span<const double> ref, std::span<const double> log_p) {
  double kl = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] > 0.0) kl += ref[i] * (std::log(ref[i]) - log_p[i]);
  }
  return std::max(kl, 0.0);
}

}  // namespace

SurrogateResult surrogate_objective(const SoftmaxPolicy& policy, const SurrogateInputs& in, bool with_gradient) {
  if (in.previous == nullptr || in.global == nullptr) throw ShapeError("surrogate needs previous and global policies");
  if (in.samples.size() != in.advantages.size()) throw ShapeError("one advantage per sample required");
  const std::size_t A = policy.n_actions();
  const auto& net = policy.network();
  const std::size_t P = net.params().size();

  SurrogateResult out;
  if (with_gradient) out.gradient.assign(P, 0.0);
  const std::size_t n = in.samples.size();
  if (n > 0) {
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> logits(A), log_p(A), p(A), upstream(A);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& step = in.samples[i];
      const std::size_t s = step.state;
      net.forward(s, logits);
      log_softmax(logits, log_p);
      for (std::size_t a = 0; a < A; ++a) p[a] = std::exp(log_p[a]);
      const auto prev = in.previous->row(s);
      const auto glob = in.global->row(s);

      const double ratio = p[step.action] / prev[step.action];
      const double adv = in.advantages[i];
      const double kl_global = kl_from_log(glob, log_p);
      const double kl_local = kl_from_log(prev, log_p);
      const double root = std::sqrt(0.5 * kl_global + kSqrtKlSmoothing);

      out.value += inv_n * (ratio * adv - in.c1 * root - in.c2 * kl_local);
      out.mean_ratio_advantage += inv_n * ratio * adv;
      out.mean_global_sqrtkl += inv_n * std::sqrt(0.5 * kl_global);
      out.mean_local_kl += inv_n * kl_local;

      if (!with_gradient) continue;
      // d/dz of each term: ratio (e_a - p), KL(ref||p) -> p - ref, sqrt(KL/2 + eps) -> (p - ref) / (4 root).
      for (std::size_t a = 0; a < A; ++a) {
        const double d_ratio = ratio * ((a == step.action ? 1.0 : 0.0) - p[a]);
        const double d_global = (p[a] - glob[a]) / (4.0 * root);
        const double d_local = p[a] - prev[a];
        upstream[a] = inv_n * (adv * d_ratio - in.c1 * d_global - in.c2 * d_local);
      }
      net.backward(s, upstream, out.gradient);
    }
  }

  if (in.prox_mu > 0.0) {
    if (in.prox_anchor.size() != P) throw ShapeError("proximal anchor length mismatch");
    const auto theta = net.params();
    double sq = 0.0;
    for (std::size_t k = 0; k < P; ++k) {
      const double d = theta[k] - in.prox_anchor[k];
      sq += d * d;
      if (with_gradient) out.gradient[k] -= in.prox_mu * d;
    }
    out.value -= 0.5 * in.prox_mu * sq;
  }
  return out;
}

void TrainerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(value_learning_rate >= 0.0) || !std::isfinite(value_learning_rate)) {
    throw ConfigError("value_learning_rate must be >= 0");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (parameterization == Parameterization::Mlp && hidden == 0) throw ConfigError("mlp needs hidden > 0");
  if (evaluation_episodes > 0 && evaluation_horizon == 0) throw ConfigError("evaluation_horizon must be positive");
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

LocalRoundResult local_round(const FiniteMdp& mdp, const SoftmaxPolicy& global, ValueEstimator& critic,
                             const FedConfig& config, const TrainerConfig& trainer, PenaltyController controller,
                             RngStream& rng) {
  const bool prox = config.algorithm == Algorithm::FedProx;
  if (config.algorithm == Algorithm::FedAvg || prox) controller.c1 = 0.0;

  LocalRoundResult result;
  result.policy = global;
  const TabularPolicy global_table = global.to_tabular();
  const std::vector<double> anchor(global.network().params().begin(), global.network().params().end());
  auto& net = result.policy.network();

  for (std::size_t it = 0; it < config.local_iterations; ++it) {
    RngStream iter_rng(rng.next_u64());
    IterationStats stats;
    stats.iteration = it;

    const TabularPolicy previous = result.policy.to_tabular();
    const std::vector<double> saved(net.params().begin(), net.params().end());
    const Network saved_critic = critic.network();

    const auto batch = sample_trajectory(mdp, previous, config.timesteps, iter_rng);
    const auto gae = gae_advantages(batch, critic, mdp.gamma(), trainer.lambda);
    std::vector<std::size_t> states(batch.size());
    for (std::size_t t = 0; t < batch.size(); ++t) states[t] = batch.steps[t].state;
    stats.value_loss =
        critic.fit(states, gae.targets, trainer.value_epochs, trainer.batch_size, trainer.value_learning_rate, iter_rng);
    stats.mean_advantage =
        std::accumulate(gae.advantages.begin(), gae.advantages.end(), 0.0) / static_cast<double>(batch.size());

    SurrogateInputs inputs;
    inputs.previous = &previous;
    inputs.global = &global_table;
    inputs.c1 = controller.c1;
    inputs.c2 = controller.c2;
    inputs.prox_mu = prox ? config.penalty.fedprox_mu : 0.0;
    inputs.prox_anchor = anchor;

    const std::size_t n = batch.size();
    const std::size_t bs = std::min(trainer.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Transition> mb_steps;
    std::vector<double> mb_adv;
    bool aborted = !std::isfinite(stats.value_loss) || !all_finite(gae.advantages);
    for (std::size_t epoch = 0; epoch < config.epochs && !aborted; ++epoch) {
      for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[iter_rng.below(i + 1)]);
      for (std::size_t begin = 0; begin < n && !aborted; begin += bs) {
        const std::size_t end = std::min(n, begin + bs);
        mb_steps.clear();
        mb_adv.clear();
        for (std::size_t b = begin; b < end; ++b) {
          mb_steps.push_back(batch.steps[order[b]]);
          mb_adv.push_back(gae.advantages[order[b]]);
        }
        inputs.samples = mb_steps;
        inputs.advantages = mb_adv;
        const auto step = surrogate_objective(result.policy, inputs);
        if (!std::isfinite(step.value) || !all_finite(step.gradient)) {
          aborted = true;
          break;
        }
        auto params = net.mutable_params();
        for (std::size_t k = 0; k < params.size(); ++k) params[k] += trainer.learning_rate * step.gradient[k];
        if (!all_finite(params)) aborted = true;
      }
    }

    if (!aborted) {
      inputs.samples = batch.steps;
      inputs.advantages = gae.advantages;
      const auto measured = surrogate_objective(result.policy, inputs, false);
      if (std::isfinite(measured.value)) {
        stats.surrogate = measured.value;
        stats.mean_local_kl = measured.mean_local_kl;
        stats.mean_global_sqrtkl = measured.mean_global_sqrtkl;
        controller = adapt_coefficients(controller, measured.mean_local_kl, measured.mean_global_sqrtkl);
      } else {
        aborted = true;
      }
    }
    if (aborted) {
      net.set_params(saved);
      critic = ValueEstimator(saved_critic);
      result.aborted = true;
    }
    stats.aborted = aborted;
    stats.c1 = controller.c1;
    stats.c2 = controller.c2;
    result.stats.push_back(stats);
  }
  result.controller = controller;
  return result;
}

namespace {

constexpr std::uint64_t kInitTag = 0x696e6974ULL;
constexpr std::uint64_t kCriticTag = 0x637269ULL;
constexpr std::uint64_t kEvalTag = 0x6576616cULL;

template <class Fn>
void for_each_parallel(std::span<const std::size_t> items, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, items.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < items.size(); i += workers) fn(i);
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

double monte_carlo_return(std::span<const FiniteMdp> family, std::span<const double> weights,
                          const TabularPolicy& policy, const TrainerConfig& trainer, std::uint64_t seed,
                          std::size_t round) {
  double total = 0.0;
  for (std::size_t k = 0; k < family.size(); ++k) {
    RngStream rng(mix_seed({seed, kEvalTag, k, round}));
    double sum = 0.0;
    for (std::size_t e = 0; e < trainer.evaluation_episodes; ++e) {
      sum += sample_episode_return(family[k], policy, trainer.evaluation_horizon, rng);
    }
    total += weights[k] * sum / static_cast<double>(trainer.evaluation_episodes);
  }
  return total;
}

}  // namespace

TrainingRun run_fedkl(const FedConfig& config, const TrainerConfig& trainer, std::span<const FiniteMdp> family) {
  config.validate();
  trainer.validate();
  if (config.algorithm == Algorithm::ExactTabular) throw ConfigError("run_fedkl needs fedkl, fedavg or fedprox");
  if (family.size() != config.n_agents) throw ConfigError("family size differs from n_agents");
  const auto weights = config.resolved_weights();
  const std::size_t S = family[0].n_states();
  const std::size_t A = family[0].n_actions();

  RngStream init_rng(mix_seed({config.master_seed, kInitTag}));
  SoftmaxPolicy policy = SoftmaxPolicy::initialize(trainer.parameterization, S, A, trainer.hidden, init_rng);
  std::vector<ValueEstimator> critics;
  for (std::size_t n = 0; n < config.n_agents; ++n) {
    RngStream critic_rng(mix_seed({config.master_seed, kCriticTag, n}));
    critics.push_back(ValueEstimator::initialize(trainer.parameterization, S, trainer.hidden, critic_rng));
  }

  PenaltyController initial;
  initial.c1 = config.penalty.c1_init;
  initial.c2 = config.penalty.c2_init;
  initial.d_local = config.penalty.d_local;
  initial.d_global = config.penalty.d_global;

  TrainingRun run;
  run.history.algorithm = config.algorithm;
  for (std::size_t t = 0;; ++t) {
    const TabularPolicy table = policy.to_tabular();
    RoundRecord record;
    record.round = t;
    record.eta_global = global_return(family, weights, table);
    if (trainer.evaluation_episodes > 0) {
      record.eta_global_mc = monte_carlo_return(family, weights, table, trainer, config.master_seed, t);
    }
    if (t == config.rounds) {
      run.history.rounds.push_back(std::move(record));
      break;
    }

    // Diagnostic only: a saturated softmax can underflow to exact zeros and leave states unreachable.
    std::optional<HeterogeneityReport> report;
    if (config.track_heterogeneity) {
      try {
        report = heterogeneity_report(family, weights, table);
      } catch (const UnreachableStateError&) {
        report.reset();
      }
    }

    const auto selected = select_agents(config.n_agents, config.participants, t, config.master_seed);
    std::vector<LocalRoundResult> results(selected.size());
    for_each_parallel(selected, config.workers, [&](std::size_t i) {
      const std::size_t n = selected[i];
      RngStream rng = RngStream::derive(config.master_seed, n, t, 0);
      results[i] = local_round(family[n], policy, critics[n], config, trainer, initial, rng);
    });

    std::vector<std::vector<double>> params;
    std::vector<double> counts;
    for (std::size_t i = 0; i < selected.size(); ++i) {
      const std::size_t n = selected[i];
      const auto& r = results[i];
      AgentRoundRecord rec;
      rec.agent = n;
      rec.eta_local = expected_return(family[n], r.policy.to_tabular());
      if (report) {
        rec.b_norm = report->agents[n].b_norm;
        rec.g_scaled = report->agents[n].g_scaled;
      }
      rec.c1 = r.controller.c1;
      rec.c2 = r.controller.c2;
      rec.iterations = r.stats;
      record.agents.push_back(std::move(rec));
      params.emplace_back(r.policy.network().params().begin(), r.policy.network().params().end());
      counts.push_back(weights[n]);
    }
    record.heterogeneity = std::move(report);
    run.history.rounds.push_back(std::move(record));
    policy.network().set_params(aggregate_parameters(params, counts));
  }
  run.final_policy = std::move(policy);
  return run;
}

double suggest_d_global(const FedHistory& unpenalized_run, double margin) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : unpenalized_run.rounds) {
    for (const auto& a : r.agents) {
      for (const auto& it : a.iterations) {
        if (it.aborted) continue;
        sum += it.mean_global_sqrtkl;
        ++count;
      }
    }
  }
  if (count == 0) throw ValidationError("run has no iteration statistics");
  return margin * sum / static_cast<double>(count);
}

}  // namespace fedkl
