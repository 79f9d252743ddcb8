#include <doctest.h>

#include <cmath>

#include <fedkl/bounds.hpp>
#include <fedkl/divergence.hpp>
#include <fedkl/envs.hpp>
#include <fedkl/error.hpp>
#include <fedkl/mdp.hpp>

#include "support/oracle.hpp"

using namespace fedkl;

namespace {

FiniteMdp single_state(double reward, double gamma) { return FiniteMdp(1, 1, {1.0}, {reward}, {1.0}, gamma); }

}  // namespace

TEST_CASE("two-state chain values under the uniform policy") {
  const auto chain = make_two_state_chain(0.5, {1.0, 0.0});
  const auto pi = TabularPolicy::uniform(2, 2);
  const auto t = policy_evaluation(chain, pi);

  // Frozen from the hand-solved 2x2 system.
  CHECK(t.v[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.v[1] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(t.q_at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t.q_at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(t.q_at(1, 0) == doctest::Approx(1.75).epsilon(1e-12));
  CHECK(t.q_at(1, 1) == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(t.adv_at(0, 0) == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(t.adv_at(1, 1) == doctest::Approx(-0.25).epsilon(1e-12));

  const auto v = oracle::values(chain, pi);
  CHECK(std::abs(v[0] - 0.5) < 1e-12);
  CHECK(std::abs(v[1] - 1.5) < 1e-12);
}

TEST_CASE("two-state chain visitation and return") {
  const auto chain = make_two_state_chain(0.5, {1.0, 0.0});
  const auto pi = TabularPolicy::uniform(2, 2);
  const auto rho = visitation_frequency(chain, pi).rho;
  CHECK(std::abs(rho[0] - 1.5) < 1e-12);
  CHECK(std::abs(rho[1] - 0.5) < 1e-12);
  CHECK(std::abs(visitation_frequency(chain, pi).mass() - 2.0) < 1e-12);
  const auto ref = oracle::visitation(chain, pi);
  CHECK(std::abs(ref[0] - 1.5) < 1e-12);
  CHECK(std::abs(expected_return(chain, pi) - 0.5) < 1e-12);
}

TEST_CASE("greedy policy advantage on the chain") {
  const auto chain = make_two_state_chain(0.5, {1.0, 0.0});
  const auto pi = TabularPolicy::uniform(2, 2);
  const std::size_t greedy_actions[] = {1, 0};  // switch in s0, stay in s1
  const auto greedy = TabularPolicy::deterministic(2, greedy_actions);
  CHECK(std::abs(policy_advantage(chain, pi, greedy) - 0.5) < 1e-12);
  CHECK(std::abs(oracle::policy_advantage(chain, pi, greedy) - 0.5) < 1e-12);
  CHECK(std::abs(policy_advantage(chain, pi, pi)) < 1e-15);
}

TEST_CASE("trivial MDPs") {
  SUBCASE("zero reward") {
    const auto inst = make_sweep_instance(11);
    const auto& m = inst.family[0];
    std::vector<double> zeros(m.n_states() * m.n_actions(), 0.0);
    const FiniteMdp flat(m.n_states(), m.n_actions(), {m.transitions().begin(), m.transitions().end()}, zeros,
                         {m.init_dist().begin(), m.init_dist().end()}, m.gamma());
    const auto t = policy_evaluation(flat, inst.pi);
    for (double x : t.v) CHECK(x == 0.0);
    for (double x : t.q) CHECK(x == 0.0);
    for (double x : t.adv) CHECK(x == 0.0);
    CHECK(expected_return(flat, inst.pi) == 0.0);
  }
  SUBCASE("single state") {
    const auto pi = TabularPolicy::uniform(1, 1);
    CHECK(std::abs(policy_evaluation(single_state(1.0, 0.9), pi).v[0] - 10.0) < 1e-9);
    CHECK(std::abs(expected_return(single_state(1.0, 0.99), pi) - 100.0) < 1e-9);
    for (double g : {0.1, 0.3, 0.95}) {
      CHECK(std::abs(visitation_frequency(single_state(0.0, g), pi).rho[0] - 1.0 / (1.0 - g)) < 1e-9);
    }
  }
  SUBCASE("symmetric chain with uniform start") {
    const auto chain = make_two_state_chain(0.7, {0.5, 0.5});
    const auto rho = visitation_frequency(chain, TabularPolicy::uniform(2, 2)).rho;
    CHECK(std::abs(rho[0] - rho[1]) < 1e-12);
  }
}

TEST_CASE("random instances agree with the iterative oracle") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = make_sweep_instance(seed);
    const auto& m = inst.family[inst.agent];
    const auto eval = evaluate(m, inst.pi);

    const auto v = oracle::values(m, inst.pi);
    const auto rho = oracle::visitation(m, inst.pi);
    for (std::size_t s = 0; s < m.n_states(); ++s) {
      CHECK(std::abs(eval.values.v[s] - v[s]) < 1e-8);
      CHECK(std::abs(eval.visitation.rho[s] - rho[s]) < 1e-8);
      CHECK(eval.visitation.rho[s] >= 0.0);
    }
    CHECK(std::abs(eval.visitation.mass() - 1.0 / (1.0 - m.gamma())) < 1e-9);

    double weighted_reward = 0.0;
    for (std::size_t s = 0; s < m.n_states(); ++s) weighted_reward += eval.visitation.rho[s] * oracle::reward_pi(m, inst.pi, s);
    CHECK(std::abs(eval.eta - weighted_reward) < 1e-8);

    for (std::size_t s = 0; s < m.n_states(); ++s) {
      double mean = 0.0;
      for (std::size_t a = 0; a < m.n_actions(); ++a) mean += inst.pi(s, a) * eval.values.adv_at(s, a);
      CHECK(std::abs(mean) < 1e-9);
    }

    // Bellman residual of the returned V.
    double residual = 0.0;
    for (std::size_t s = 0; s < m.n_states(); ++s) {
      double x = oracle::reward_pi(m, inst.pi, s);
      for (std::size_t t = 0; t < m.n_states(); ++t) x += m.gamma() * oracle::p_pi(m, inst.pi, s, t) * eval.values.v[t];
      residual = std::max(residual, std::abs(x - eval.values.v[s]));
    }
    CHECK(residual <= 1e-9);
  }
}

TEST_CASE("performance difference identity") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = make_sweep_instance(seed);
    const auto& m = inst.family[inst.agent];
    const auto base = policy_evaluation(m, inst.pi);
    const auto rho_next = oracle::visitation(m, inst.next);
    double rhs = 0.0;
    for (std::size_t s = 0; s < m.n_states(); ++s) {
      for (std::size_t a = 0; a < m.n_actions(); ++a) rhs += rho_next[s] * inst.next(s, a) * base.adv_at(s, a);
    }
    CHECK(std::abs(expected_return(m, inst.next) - expected_return(m, inst.pi) - rhs) < 1e-8);
  }
}

TEST_CASE("double-sum and trace forms of the policy advantage agree") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = make_sweep_instance(seed);
    const auto& m = inst.family[inst.agent];
    const auto eval = evaluate(m, inst.pi);
    CHECK(std::abs(policy_advantage(eval, inst.next) - policy_advantage_trace(eval, inst.next)) < 1e-9);
    CHECK(std::abs(policy_advantage(eval, inst.next) - oracle::policy_advantage(m, inst.pi, inst.next)) < 1e-8);
  }
}

TEST_CASE("advantage linearity in the candidate") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = make_sweep_instance(seed);
    const auto& m = inst.family[inst.agent];
    const auto eval = evaluate(m, inst.pi);
    std::vector<double> mixed(inst.next.probs().size());
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      mixed[i] = inst.mix * inst.next.probs()[i] + (1.0 - inst.mix) * inst.third.probs()[i];
    }
    const TabularPolicy mixture(m.n_states(), m.n_actions(), mixed);
    const double lhs = policy_advantage(eval, mixture);
    const double rhs = inst.mix * policy_advantage(eval, inst.next) + (1.0 - inst.mix) * policy_advantage(eval, inst.third);
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("construction rejects malformed tables") {
  CHECK_THROWS_AS(FiniteMdp(1, 1, {0.9}, {0.0}, {1.0}, 0.5), ValidationError);
  CHECK_THROWS_AS(FiniteMdp(1, 1, {1.0}, {0.0}, {0.5}, 0.5), ValidationError);
  CHECK_THROWS_AS(FiniteMdp(1, 1, {1.0}, {0.0}, {1.0}, 1.0), ValidationError);
  CHECK_THROWS_AS(FiniteMdp(2, 1, {1.0}, {0.0}, {1.0}, 0.5), ShapeError);
  CHECK_THROWS_AS(TabularPolicy(1, 2, {0.7, 0.7}), ValidationError);
  CHECK_THROWS_AS(TabularPolicy(1, 2, {1.5, -0.5}), ValidationError);

  const auto chain = make_two_state_chain(0.5, {1.0, 0.0});
  CHECK_THROWS_AS(policy_evaluation(chain, TabularPolicy::uniform(3, 2)), ShapeError);
  CHECK_THROWS_AS(visitation_frequency(chain, TabularPolicy::uniform(2, 3)), ShapeError);
}

TEST_CASE("JSON round trip is exact") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = make_sweep_instance(seed);
    const auto back = family_from_json(family_to_json(inst.family));
    REQUIRE(back.size() == inst.family.size());
    for (std::size_t n = 0; n < back.size(); ++n) CHECK(back[n] == inst.family[n]);
    CHECK(mdp_from_json(mdp_to_json(inst.family[0])) == inst.family[0]);
  }
  CHECK_THROWS_AS(mdp_from_json("{\"n_states\": 1}"), ConfigError);
}

TEST_CASE("per-state divergences") {
  const std::vector<double> p{1.0, 0.0}, q{0.5, 0.5};
  CHECK(std::abs(kl_divergence(p, q) - std::log(2.0)) < 1e-15);
  CHECK(std::abs(tv_distance(p, q) - 0.5) < 1e-15);
  CHECK(std::isinf(kl_divergence(q, p)));

  RngStream rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_policy(4, 3, rng), b = random_policy(4, 3, rng);
    for (double tv : per_state_tv(a, b)) CHECK((tv >= 0.0 && tv <= 1.0));
    for (double kl : per_state_kl(a, b)) CHECK(kl >= 0.0);
    for (double kl : per_state_kl(a, a)) CHECK(kl == 0.0);
  }
}
