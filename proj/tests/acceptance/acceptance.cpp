#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include <fedkl/bounds.hpp>
#include <fedkl/divergence.hpp>
#include <fedkl/envs.hpp>
#include <fedkl/federation.hpp>
#include <fedkl/hetero.hpp>
#include <fedkl/trainer.hpp>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "support/families.hpp"
#include "support/surrogate_case.hpp"

using namespace fedkl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Outcome bound_certification() {
  const auto start = Clock::now();
  const auto records = run_bound_sweep(500, 0);
  const double elapsed = seconds_since(start);
  std::map<std::string, std::size_t> count, failed;
  double worst = 0.0;
  for (const auto& r : records) {
    ++count[r.check.name];
    if (!r.check.holds) ++failed[r.check.name];
    if (r.check.relation == Relation::AtLeast && !r.check.infinite) worst = std::min(worst, r.check.slack);
  }
  std::size_t violations = 0;
  for (const auto& [name, n] : failed) violations += n;
  bool pass = violations == 0 && worst >= -kBoundSlackTolerance && elapsed < 120.0;
  for (const auto& [name, n] : count) pass = pass && n >= 500;
  return {pass, fmt::format("{} checks x 500 seeds, {} violations, min slack {:.3g}, {:.2f} s", count.size(),
                            violations, worst, elapsed)};
}

Outcome equality_cases() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = make_sweep_instance(seed);
    const auto& m = inst.family[inst.agent];
    const auto tr = check_trpo_bound(m, inst.pi, inst.pi);
    const std::vector<TabularPolicy> same(inst.family.size(), inst.pi);
    const auto row = inst.pi.row(0);
    for (double s : {tr.kl.slack, tr.tv.slack,
                     check_theorem1(inst.family, inst.weights, inst.pi, inst.pi, inst.agent).slack,
                     check_corollary2(inst.family, inst.weights, inst.pi, inst.pi, inst.agent).slack,
                     check_minorization(inst.family, inst.weights, inst.pi, inst.agent).slack,
                     check_advantage_linearity(m, inst.pi, inst.pi, inst.pi, inst.mix).slack,
                     check_pinsker(row, row).slack, check_mixture_tv(same, inst.weights, inst.pi).slack}) {
      worst = std::max(worst, std::abs(s));
    }
  }
  return {worst <= kIdentityTolerance, fmt::format("200 instances, max |slack| {:.3g}", worst)};
}

Outcome necessary_condition() {
  RngStream rng(2024);
  const std::vector<double> q{0.3, 0.7};
  double best = -1e300;
  bool dominated = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto family = support::opposed_pair(seed);
    const auto pi = random_policy(family[0].n_states(), family[0].n_actions(), rng);
    const auto report = heterogeneity_report(family, q, pi);
    dominated = dominated && report.agents[0].b_norm >= report.agents[0].a_norm;
    for (int c = 0; c < 1000; ++c) {
      const auto cand = random_policy(pi.n_states(), pi.n_actions(), rng, 0.5 + 3.0 * rng.uniform());
      best = std::max(best, penalized_local_advantage(family, q, pi, cand, 0));
    }
  }
  return {dominated && best <= 1e-9,
          fmt::format("10 instances x 1000 candidates, best penalized advantage {:.3g}", best)};
}

Outcome monotonicity() {
  const auto start = Clock::now();
  double worst_drop = 0.0, worst_tail = 0.0;
  std::size_t improved = 0;
  bool monotone = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto family = make_garnet_family(support::small_garnet(seed));
    FedConfig c;
    c.n_agents = 3;
    c.participants = 3;
    c.rounds = 30;
    c.master_seed = seed;
    c.track_heterogeneity = false;
    const auto h = run_federated_policy_iteration(c, family);
    const auto check = check_monotone_history(h);
    monotone = monotone && check.holds;
    const auto eta = h.global_returns();
    for (std::size_t t = 1; t < eta.size(); ++t) worst_drop = std::max(worst_drop, eta[t - 1] - eta[t]);
    worst_tail = std::max(worst_tail, std::abs(eta[30] - eta[29]));
    if (eta.back() > eta.front() + 1e-9) ++improved;
  }
  const double elapsed = seconds_since(start);
  return {monotone && worst_tail < 1e-6 && elapsed < 300.0,
          fmt::format("20 families, {} improved, worst drop {:.3g}, worst final step {:.3g}, {:.2f} s", improved,
                      worst_drop, worst_tail, elapsed)};
}

Outcome iid_degeneracy() {
  RngStream rng(5);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = make_sweep_instance(seed);
    const std::vector<FiniteMdp> iid(inst.family.size(), inst.family[0]);
    for (int p = 0; p < 4; ++p) {
      const auto pi = random_policy(iid[0].n_states(), iid[0].n_actions(), rng, 0.5 + 2.0 * rng.uniform());
      for (const auto& a : heterogeneity_report(iid, inst.weights, pi).agents) {
        worst = std::max({worst, a.b_norm, a.alpha});
      }
    }
  }
  return {worst < 1e-9, fmt::format("50 families x 4 policies, max ||B||_F or alpha {:.3g}", worst)};
}

Outcome heterogeneity_ordering() {
  const auto pi = TabularPolicy::uniform(25, 4);
  const std::vector<double> q{0.5, 0.5};
  auto mean_g = [&](double sigma) {
    const auto r = heterogeneity_report(support::noise_pair(sigma), q, pi);
    return 0.5 * (r.agents[0].g_scaled + r.agents[1].g_scaled);
  };
  const double iid = mean_g(0.0), low = mean_g(0.2), high = mean_g(0.4);
  return {high < low && low < iid, fmt::format("g at sigma 0.4 / 0.2 / 0: {:.6f} / {:.6f} / {:.6f}", high, low, iid)};
}

Outcome gradient_checks() {
  double worst_tab = 0.0, worst_mlp = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto tab = support::random_case(Parameterization::TabularSoftmax, 1000 + seed);
    auto mlp = support::random_case(Parameterization::Mlp, 2000 + seed);
    worst_tab = std::max(worst_tab, support::surrogate_gradient_error(tab, 0.8, 0.4, 0.05));
    worst_mlp = std::max(worst_mlp, support::surrogate_gradient_error(mlp, 0.8, 0.4, 0.05));
  }
  return {worst_tab < 1e-4 && worst_mlp < 1e-4,
          fmt::format("50 points each, max relative error tabular {:.3g}, mlp {:.3g}", worst_tab, worst_mlp)};
}

Outcome controller_table() {
  struct Row {
    double local, global;
    double c1, c2;
  };
  PenaltyController base;
  base.c1 = 4.0;
  base.c2 = 1.0;
  base.d_local = 0.0003;
  base.d_global = 0.6;
  const double dl = base.d_local, dg = base.d_global;
  const Row rows[] = {
      {0.0001, 0.6, 4.0, 0.5},
      {0.0003, 0.9, 8.0, 1.0},
      {dl / 1.1, dg / 1.1, 4.0, 1.0},
      {dl * 1.1, dg * 1.1, 4.0, 1.0},
      {std::nextafter(dl / 1.1, 0.0), std::nextafter(dg / 1.1, 0.0), 2.0, 0.5},
      {std::nextafter(dl * 1.1, 1.0), std::nextafter(dg * 1.1, 1.0), 8.0, 2.0},
      {0.0, 0.0, 2.0, 0.5},
      {dl, dg, 4.0, 1.0},
  };
  std::size_t bad = 0;
  for (const auto& r : rows) {
    const auto next = adapt_coefficients(base, r.local, r.global);
    if (next.c1 != r.c1 || next.c2 != r.c2) ++bad;
  }
  return {bad == 0, fmt::format("{} table rows, {} mismatches", std::size(rows), bad)};
}

Outcome divergence_phenomenon(const fs::path& config_dir) {
  const auto start = Clock::now();
  auto config = cli::load_config(config_dir / "gridworld_fedkl.json");
  std::size_t hits = 0;
  std::string detail;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto fed = config.federation;
    fed.master_seed = seed;
    auto ratio = [](const FedHistory& h) {
      const auto eta = h.global_returns();
      const double peak = *std::max_element(eta.begin(), eta.end());
      const double tail = std::accumulate(eta.end() - 10, eta.end(), 0.0) / 10.0;
      return tail / peak;
    };
    fed.algorithm = Algorithm::FedAvg;
    const auto avg = run_fedkl(fed, config.trainer, config.family).history;
    fed.algorithm = Algorithm::FedKL;
    fed.penalty.d_global = suggest_d_global(avg);
    const auto kl = run_fedkl(fed, config.trainer, config.family).history;
    const double ra = ratio(avg), rk = ratio(kl);
    if (ra <= 0.8 && rk >= 0.9) ++hits;
    detail += fmt::format("seed {}: fedavg {:.3f}, fedkl {:.3f}; ", seed, ra, rk);
  }
  const double elapsed = seconds_since(start);
  return {hits >= 2 && elapsed < 900.0,
          fmt::format("{}{} of 3 pairs, tail/peak, {:.1f} s", detail, hits, elapsed)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(entry.path(), dir).string()] = ss.str();
  }
  return files;
}

Outcome determinism(const fs::path& config_dir) {
  const fs::path root = fs::temp_directory_path() / "fedkl-acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream(root / "sampled.json") << R"({
  "seed": 4,
  "environment": {"kind": "gridworld", "width": 3, "height": 3, "goals": [{"x": 2, "y": 0, "reward": 1.0}],
                  "n_agents": 2, "init_regions": "columns", "dynamics_noise": [0.0, 0.3], "gamma": 0.9},
  "federation": {"algorithm": "fedkl", "participants": 1, "rounds": 4, "local_iterations": 2,
                 "timesteps": 32, "epochs": 3, "track_heterogeneity": true},
  "trainer": {"learning_rate": 1.0, "batch_size": 16, "parameterization": "mlp", "hidden": 4,
              "evaluation_episodes": 3},
  "compare": {"algorithms": ["fedavg", "fedprox", "fedkl"], "repetitions": 2}
})";
  }
  struct Job {
    std::string command;
    fs::path config;
  };
  const Job jobs[] = {
      {"train", root / "sampled.json"},
      {"compare", root / "sampled.json"},
      {"analyze", root / "sampled.json"},
      {"gen-env", root / "sampled.json"},
      {"train", config_dir / "garnet_exact.json"},
      {"analyze", config_dir / "gridworld_noise_pair.json"},
      {"verify-bounds", config_dir / "bounds_sweep.json"},
  };
  std::size_t files = 0, mismatched = 0, failed = 0;
  for (const auto& job : jobs) {
    std::map<std::string, std::string> runs[2];
    for (int r = 0; r < 2; ++r) {
      cli::CommandOptions o;
      o.config_path = job.config;
      o.out_dir = root / fmt::format("{}-{}-{}", job.command, job.config.stem().string(), r);
      o.workers = r == 0 ? 1 : 2;
      std::ostringstream out, err;
      if (cli::run_command(job.command, o, out, err) != cli::kExitSuccess) {
        ++failed;
        std::cerr << job.command << " " << job.config << ": " << err.str();
      }
      runs[r] = snapshot(*o.out_dir);
    }
    files += runs[0].size();
    if (runs[0] != runs[1]) ++mismatched;
  }
  fs::remove_all(root);
  return {failed == 0 && mismatched == 0 && files > 0,
          fmt::format("{} commands run twice (1 and 2 workers), {} files, {} differing, {} failed", std::size(jobs),
                      files, mismatched, failed)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path config_dir = argc > 1 ? fs::path(argv[1]) : fs::path(FEDKL_CONFIG_DIR);
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"bound certification", bound_certification},
      {"equality cases", equality_cases},
      {"necessary-condition gate", necessary_condition},
      {"exact federated monotonicity", monotonicity},
      {"IID degeneracy", iid_degeneracy},
      {"heterogeneity ordering", heterogeneity_ordering},
      {"surrogate gradient checks", gradient_checks},
      {"adaptive controller table", controller_table},
      {"divergence vs stabilization", [&] { return divergence_phenomenon(config_dir); }},
      {"determinism", [&] { return determinism(config_dir); }},
  };
  int failures = 0;
  int index = 1;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    std::cout << fmt::format("[{}] {:2d} {}: {}", o.pass ? "PASS" : "FAIL", index, name, o.detail) << std::endl;
    if (!o.pass) ++failures;
    ++index;
  }
  std::cout << fmt::format("{} of {} criteria passed\n", std::size(criteria) - failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
