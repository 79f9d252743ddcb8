#include <doctest.h>

#include <cmath>

#include <fedkl/bounds.hpp>
#include <fedkl/divergence.hpp>
#include <fedkl/envs.hpp>
#include <fedkl/federation.hpp>

#include "support/oracle.hpp"

using namespace fedkl;

TEST_CASE("chain: uniform to greedy") {
  const auto chain = make_two_state_chain(0.5, {1.0, 0.0});
  const auto pi = TabularPolicy::uniform(2, 2);
  const std::size_t actions[] = {1, 0};
  const auto greedy = TabularPolicy::deterministic(2, actions);

  CHECK(std::abs(oracle::eta(chain, greedy) - 1.0) < 1e-12);
  const auto checks = check_trpo_bound(chain, pi, greedy);
  CHECK(checks.holds());
  CHECK(checks.kl.infinite);  // greedy puts zero mass where uniform does not
  // Frozen: lhs = 1 - 0.5, c_cpo = 2 * 0.25 * 0.5 / 0.25 = 1, sum_s rho(s) TV(s) = 2 * 0.5.
  CHECK(std::abs(checks.tv.lhs - 0.5) < 1e-12);
  CHECK(std::abs(checks.tv.rhs + 0.5) < 1e-12);
  CHECK(std::abs(checks.tv.coefficients.at("c_cpo") - 1.0) < 1e-12);
}

TEST_CASE("every check is tight at pi' = pi") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = make_sweep_instance(seed);
    const auto& m = inst.family[inst.agent];
    const auto tr = check_trpo_bound(m, inst.pi, inst.pi);
    CHECK(std::abs(tr.kl.slack) < 1e-9);
    CHECK(std::abs(tr.tv.slack) < 1e-9);
    CHECK(std::abs(check_theorem1(inst.family, inst.weights, inst.pi, inst.pi, inst.agent).slack) < 1e-9);
    CHECK(std::abs(check_corollary2(inst.family, inst.weights, inst.pi, inst.pi, inst.agent).slack) < 1e-9);
    CHECK(check_minorization(inst.family, inst.weights, inst.pi, inst.agent).holds);
    CHECK(std::abs(check_minorization(inst.family, inst.weights, inst.pi, inst.agent).slack) < 1e-9);
    const std::vector<TabularPolicy> same(3, inst.pi);
    CHECK(std::abs(check_mixture_tv(same, std::vector<double>(3, 1.0 / 3.0), inst.pi).slack) < 1e-12);
  }
}

TEST_CASE("the weighted-advantage bound is an equality for IID families") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = make_sweep_instance(seed);
    const std::vector<FiniteMdp> iid(inst.family.size(), inst.family[0]);
    const auto c = check_theorem1(iid, inst.weights, inst.pi, inst.next, 0);
    CHECK(std::abs(c.slack) < 1e-9);
    CHECK(std::abs(c.lhs - oracle::policy_advantage(iid[0], inst.pi, inst.next)) < 1e-8);
  }
}

TEST_CASE("sweep instances hold") {
  // The full 500-seed sweep runs in the acceptance gate.
  const auto records = run_bound_sweep(60, 1000);
  CHECK(records.size() == 60 * 8);
  for (const auto& r : records) {
    INFO(r.check.name << " seed " << r.seed << " slack " << r.check.slack);
    CHECK(r.check.holds);
  }
}

TEST_CASE("the CPO constant never exceeds the TRPO constant") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = make_sweep_instance(seed);
    const auto c = check_cpo_tv(inst.family[inst.agent], inst.pi, inst.next);
    CHECK(c.coefficients.at("c_cpo") <= c.coefficients.at("c") + 1e-12);
  }
}

TEST_CASE("Pinsker") {
  const std::vector<double> p{1.0, 0.0}, q{0.5, 0.5};
  const auto c = check_pinsker(p, q);
  CHECK(std::abs(c.lhs - std::sqrt(0.5 * std::log(2.0))) < 1e-15);
  CHECK(std::abs(c.lhs - 0.5887050112577) < 1e-12);
  CHECK(c.rhs == 0.5);
  CHECK(c.holds);
  CHECK(check_pinsker(q, q).slack == 0.0);

  const auto vacuous = check_pinsker(q, p);
  CHECK(vacuous.infinite);
  CHECK(vacuous.holds);

  RngStream rng(31);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = 1 + rng.below(16);
    const auto a = random_distribution(n, rng, 0.5 + 2.0 * rng.uniform());
    const auto b = random_distribution(n, rng, 0.5 + 2.0 * rng.uniform());
    const auto r = check_pinsker(a, b);
    if (!r.holds) FAIL("pinsker violated at draw " << i);
  }
}

TEST_CASE("mixture TV") {
  RngStream rng(12);
  for (int i = 0; i < 50; ++i) {
    const auto ref = random_policy(5, 3, rng);
    const auto one = random_policy(5, 3, rng);
    const std::vector<TabularPolicy> single{one};
    CHECK(std::abs(check_mixture_tv(single, std::vector<double>{1.0}, ref).slack) < 1e-12);

    std::vector<TabularPolicy> several;
    for (int k = 0; k < 4; ++k) several.push_back(random_policy(5, 3, rng));
    CHECK(check_mixture_tv(several, random_distribution(4, rng), ref).holds);
  }
}

TEST_CASE("monotone history") {
  FedHistory h;
  h.rounds.resize(1);
  h.rounds[0].eta_global = 0.3;
  CHECK(check_monotone_history(h).holds);

  h.rounds.resize(3);
  h.rounds[1].eta_global = 0.5;
  h.rounds[2].eta_global = 0.5 - 5e-9;
  CHECK(check_monotone_history(h).holds);
  h.rounds[2].eta_global = 0.4;
  const auto bad = check_monotone_history(h);
  CHECK_FALSE(bad.holds);
  CHECK(bad.witness == 2);
}

TEST_CASE("negated penalties are caught") {
  BoundOptions broken;
  broken.negate_penalty = true;
  std::size_t violations = 0;
  for (const auto& r : run_bound_sweep(40, 0, broken)) violations += r.check.holds ? 0 : 1;
  CHECK(violations > 0);
}
