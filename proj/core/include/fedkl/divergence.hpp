#pragma once

#include <span>
#include <vector>

#include "fedkl/mdp.hpp"

namespace fedkl {

/// D_KL(p || q). Returns +infinity when q has a zero where p is positive.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Half the L1 distance.
double tv_distance(std::span<const double> p, std::span<const double> q);

// Per-state divergences between two policies on the same state space.
// Argument order follows D(pi(.|s) || pi'(.|s)).
std::vector<double> per_state_tv(const TabularPolicy& pi, const TabularPolicy& other);
std::vector<double> per_state_kl(const TabularPolicy& pi, const TabularPolicy& other);

double max_tv(const TabularPolicy& pi, const TabularPolicy& other);
double max_kl(const TabularPolicy& pi, const TabularPolicy& other);

/// sum_s rho(s) D_TV(pi(.|s) || other(.|s)), with rho unnormalized.
double weighted_tv(std::span<const double> rho, const TabularPolicy& pi, const TabularPolicy& other);

}  // namespace fedkl
