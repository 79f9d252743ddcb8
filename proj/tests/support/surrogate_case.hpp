#pragma once

#include <vector>

#include <fedkl/bounds.hpp>
#include <fedkl/network.hpp>
#include <fedkl/trainer.hpp>

#include "support/oracle.hpp"

namespace support {

using namespace fedkl;

struct SurrogateCase {
  SoftmaxPolicy policy;
  TabularPolicy previous;
  TabularPolicy global;
  std::vector<Transition> samples;
  std::vector<double> advantages;
  std::vector<double> anchor;

  SurrogateInputs inputs(double c1, double c2, double mu) const {
    SurrogateInputs in;
    in.samples = samples;
    in.advantages = advantages;
    in.previous = &previous;
    in.global = &global;
    in.c1 = c1;
    in.c2 = c2;
    in.prox_mu = mu;
    in.prox_anchor = anchor;
    return in;
  }
};

/// A random 3-state, 3-action policy with random behavior, broadcast and proximal anchors.
inline SurrogateCase random_case(Parameterization kind, std::uint64_t seed) {
  RngStream rng(seed);
  const std::size_t S = 3, A = 3;
  SurrogateCase c{SoftmaxPolicy::initialize(kind, S, A, 4, rng), random_policy(S, A, rng), random_policy(S, A, rng),
                  {}, {}, {}};
  for (double& x : c.policy.network().mutable_params()) x = rng.normal();
  for (int i = 0; i < 20; ++i) {
    Transition t;
    t.state = rng.below(S);
    t.action = rng.below(A);
    c.samples.push_back(t);
    c.advantages.push_back(rng.normal());
  }
  c.anchor.resize(c.policy.network().params().size());
  for (double& x : c.anchor) x = rng.normal();
  return c;
}

/// Relative error between the analytic surrogate gradient and central differences.
inline double surrogate_gradient_error(SurrogateCase& c, double c1, double c2, double mu) {
  const auto in = c.inputs(c1, c2, mu);
  const auto analytic = surrogate_objective(c.policy, in).gradient;
  const std::vector<double> x0(c.policy.network().params().begin(), c.policy.network().params().end());
  const auto numeric = oracle::finite_difference(
      [&](const std::vector<double>& x) {
        c.policy.network().set_params(x);
        return surrogate_objective(c.policy, in, false).value;
      },
      x0);
  c.policy.network().set_params(x0);
  return oracle::relative_error(analytic, numeric);
}

}  // namespace support
