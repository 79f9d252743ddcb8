#include "fedkl/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedkl/error.hpp"

namespace fedkl {

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("KL: distributions differ in length");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can leave a tiny negative value for p == q.
  return std::max(kl, 0.0);
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("TV: distributions differ in length");
  double l1 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) l1 += std::abs(p[i] - q[i]);
  return 0.5 * l1;
}

namespace {

void require_same_shape(const TabularPolicy& a, const TabularPolicy& b) {
  if (a.n_states() != b.n_states() || a.n_actions() != b.n_actions()) {
    throw ShapeError("policies differ in shape");
  }
}

}  // namespace

std::vector<double> per_state_tv(const TabularPolicy& pi, const TabularPolicy& other) {
  require_same_shape(pi, other);
  std::vector<double> out(pi.n_states());
  for (std::size_t s = 0; s < pi.n_states(); ++s) out[s] = tv_distance(pi.row(s), other.row(s));
  return out;
}

std::vector<double> per_state_kl(const TabularPolicy& pi, const TabularPolicy& other) {
  require_same_shape(pi, other);
  std::vector<double> out(pi.n_states());
  for (std::size_t s = 0; s < pi.n_states(); ++s) out[s] = kl_divergence(pi.row(s), other.row(s));
  return out;
}

double max_tv(const TabularPolicy& pi, const TabularPolicy& other) {
  const auto tv = per_state_tv(pi, other);
  return *std::max_element(tv.begin(), tv.end());
}

double max_kl(const TabularPolicy& pi, const TabularPolicy& other) {
  const auto kl = per_state_kl(pi, other);
  return *std::max_element(kl.begin(), kl.end());
}

double weighted_tv(std::span<const double> rho, const TabularPolicy& pi, const TabularPolicy& other) {
  require_same_shape(pi, other);
  if (rho.size() != pi.n_states()) throw ShapeError("visitation vector does not match policy");
  double total = 0.0;
  for (std::size_t s = 0; s < pi.n_states(); ++s) total += rho[s] * tv_distance(pi.row(s), other.row(s));
  return total;
}

}  // namespace fedkl
