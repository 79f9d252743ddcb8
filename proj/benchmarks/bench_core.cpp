#include <benchmark/benchmark.h>

#include <fedkl/bounds.hpp>
#include <fedkl/envs.hpp>
#include <fedkl/federation.hpp>
#include <fedkl/hetero.hpp>
#include <fedkl/mdp.hpp>
#include <fedkl/trainer.hpp>

using namespace fedkl;

namespace {

std::vector<FiniteMdp> grid(std::size_t side) {
  GridSpec g;
  g.width = side;
  g.height = side;
  g.goals = {{{static_cast<int>(side) - 1, 0}, 1.0}};
  g.n_agents = 2;
  g.init_regions = split_columns(g, 2);
  g.dynamics_noise = {0.0, 0.3};
  return make_gridworld_family(g);
}

void BM_Evaluate(benchmark::State& state) {
  const auto family = grid(static_cast<std::size_t>(state.range(0)));
  const auto pi = TabularPolicy::uniform(family[0].n_states(), 4);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(family[0], pi));
}
BENCHMARK(BM_Evaluate)->Arg(5)->Arg(10)->Arg(20);

void BM_HeterogeneityReport(benchmark::State& state) {
  const auto family = grid(static_cast<std::size_t>(state.range(0)));
  const auto pi = TabularPolicy::uniform(family[0].n_states(), 4);
  const std::vector<double> q{0.5, 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(heterogeneity_report(family, q, pi));
}
BENCHMARK(BM_HeterogeneityReport)->Arg(5)->Arg(10);

void BM_BoundSweep(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(run_bound_sweep(static_cast<std::size_t>(state.range(0)), 0));
}
BENCHMARK(BM_BoundSweep)->Arg(50);

void BM_SurrogateGradient(benchmark::State& state) {
  const auto kind = state.range(0) == 0 ? Parameterization::TabularSoftmax : Parameterization::Mlp;
  const auto family = grid(5);
  RngStream rng(1);
  const auto policy = SoftmaxPolicy::initialize(kind, 25, 4, 16, rng);
  const auto tab = policy.to_tabular();
  const auto batch = sample_trajectory(family[0], tab, 256, rng);
  std::vector<double> adv(batch.size());
  for (double& a : adv) a = rng.normal();
  SurrogateInputs in;
  in.samples = batch.steps;
  in.advantages = adv;
  in.previous = &tab;
  in.global = &tab;
  in.c1 = 1.0;
  in.c2 = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(surrogate_objective(policy, in));
}
BENCHMARK(BM_SurrogateGradient)->Arg(0)->Arg(1);

void BM_FederatedPolicyIteration(benchmark::State& state) {
  GarnetSpec spec;
  spec.n_states = 8;
  spec.n_actions = 4;
  spec.n_agents = 3;
  spec.gamma = 0.1;
  spec.seed = 3;
  const auto family = make_garnet_family(spec);
  FedConfig c;
  c.n_agents = 3;
  c.participants = 3;
  c.rounds = 10;
  c.track_heterogeneity = false;
  for (auto _ : state) benchmark::DoNotOptimize(run_federated_policy_iteration(c, family));
}
BENCHMARK(BM_FederatedPolicyIteration);

}  // namespace

BENCHMARK_MAIN();
