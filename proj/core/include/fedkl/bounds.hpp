#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedkl/mdp.hpp"
#include "fedkl/rng.hpp"

namespace fedkl {

struct FedHistory;

/// Inequality checks hold when slack >= -1e-8.
inline constexpr double kBoundSlackTolerance = 1e-8;
/// Identity checks hold when |slack| <= 1e-9.
inline constexpr double kIdentityTolerance = 1e-9;

enum class Relation { AtLeast, Equal };

/**
 * One certified relation lhs >= rhs (or lhs == rhs). `slack` is lhs - rhs.
 * Infinite KL terms make a bound vacuous; `infinite` flags that case.
 */
struct BoundCheck {
  std::string name;
  Relation relation = Relation::AtLeast;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool holds = true;
  bool infinite = false;
  long long witness = -1;  // worst state or round, when meaningful
  std::map<std::string, double> coefficients;
};

BoundCheck make_check(std::string name, double lhs, double rhs,
                      Relation relation = Relation::AtLeast);

/// Switches that deliberately break the checked formulas, for self-testing the checker.
struct BoundOptions {
  bool negate_penalty = false;
};

/// TRPO: eta(pi') - eta(pi) >= A_pi(pi') - c D_KL^max, c = 4 eps gamma / (1-gamma)^2.
BoundCheck check_trpo_kl(const FiniteMdp& mdp, const TabularPolicy& pi, const TabularPolicy& next,
                         const BoundOptions& options = {});

/// CPO: eta(pi') - eta(pi) >= A_pi(pi') - c_cpo sum_s rho_pi(s) D_TV(s).
BoundCheck check_cpo_tv(const FiniteMdp& mdp, const TabularPolicy& pi, const TabularPolicy& next,
                        const BoundOptions& options = {});

struct TrustRegionChecks {
  BoundCheck kl;
  BoundCheck tv;
  bool holds() const noexcept { return kl.holds && tv.holds; }
};

TrustRegionChecks check_trpo_bound(const FiniteMdp& mdp, const TabularPolicy& pi,
                                   const TabularPolicy& next, const BoundOptions& options = {});

/// sum_k q_k A_k(pi') >= A_n(pi') - 2 ||B_n||_F sum_s rho_n(s) D_TV(s).
BoundCheck check_theorem1(std::span<const FiniteMdp> family, std::span<const double> weights,
                          const TabularPolicy& pi, const TabularPolicy& next, std::size_t n,
                          const BoundOptions& options = {});

/// Right-hand side of the global-return lower bound for agent n's update (the minorizer g).
double global_lower_bound(std::span<const FiniteMdp> family, std::span<const double> weights,
                          const TabularPolicy& pi, const TabularPolicy& next, std::size_t n,
                          const BoundOptions& options = {});

/// eta(pi') >= g(pi'), with g the global lower bound around pi.
BoundCheck check_corollary2(std::span<const FiniteMdp> family, std::span<const double> weights,
                            const TabularPolicy& pi, const TabularPolicy& next, std::size_t n,
                            const BoundOptions& options = {});

/// g(pi) == eta(pi): the lower bound touches the return at the expansion point.
BoundCheck check_minorization(std::span<const FiniteMdp> family, std::span<const double> weights,
                              const TabularPolicy& pi, std::size_t n);

/// sqrt(KL(p||q)/2) >= TV(p,q). Infinite KL is flagged and holds vacuously.
BoundCheck check_pinsker(std::span<const double> p, std::span<const double> q,
                         const BoundOptions& options = {});

/// Per state: sum_k q_k TV(ref, pi_k) >= TV(ref, sum_k q_k pi_k). Reports the tightest state.
BoundCheck check_mixture_tv(std::span<const TabularPolicy> policies, std::span<const double> weights,
                            const TabularPolicy& ref);

/// A_pi(w a + (1-w) b) == w A_pi(a) + (1-w) A_pi(b).
BoundCheck check_advantage_linearity(const FiniteMdp& mdp, const TabularPolicy& base,
                                     const TabularPolicy& first, const TabularPolicy& second,
                                     double mix);

/// Every round: eta(pi^{t+1}) >= eta(pi^t) - 1e-8. Reports the worst round.
BoundCheck check_monotone_history(const FedHistory& history);

/// Penalized local advantage A_n(pi') - alpha_n sum_s rho_n(s) D_TV(s); never positive when
/// ||A_n||_F <= ||B_n||_F.
double penalized_local_advantage(std::span<const FiniteMdp> family, std::span<const double> weights,
                                 const TabularPolicy& pi, const TabularPolicy& next, std::size_t n);

// --- random instances ---------------------------------------------------

struct SweepLimits {
  std::size_t max_states = 12;
  std::size_t max_actions = 4;
  std::size_t max_agents = 5;
};

/// A heterogeneous family plus two policies and a mixture weight, all drawn from one seed.
struct SweepInstance {
  std::uint64_t seed = 0;
  std::vector<FiniteMdp> family;
  std::vector<double> weights;
  TabularPolicy pi;
  TabularPolicy next;
  TabularPolicy third;
  double mix = 0.5;
  std::size_t agent = 0;
};

SweepInstance make_sweep_instance(std::uint64_t seed, const SweepLimits& limits = {});

/// Random strictly positive distribution (normalized exponentials), optionally sharpened.
std::vector<double> random_distribution(std::size_t n, RngStream& rng, double sharpness = 1.0);
TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions, RngStream& rng,
                            double sharpness = 1.0);

struct SweepRecord {
  std::uint64_t seed = 0;
  BoundCheck check;
};

/// Every check family evaluated on `n_seeds` instances seeded base_seed, base_seed+1, ...
std::vector<SweepRecord> run_bound_sweep(std::size_t n_seeds, std::uint64_t base_seed,
                                         const BoundOptions& options = {},
                                         const SweepLimits& limits = {});

std::string sweep_record_to_json(const SweepRecord& record);

}  // namespace fedkl
