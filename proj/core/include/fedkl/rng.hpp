#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace fedkl {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Order-sensitive hash of a list of integers into one seed.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) noexcept;

/// Deterministic random stream. The engine is std::mt19937_64; the variate
/// transforms are written out here so that streams are bit-identical across
/// standard library implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  /// One stream per (agent, round, iteration) derived from the master seed.
  static RngStream derive(std::uint64_t master, std::uint64_t agent, std::uint64_t round,
                          std::uint64_t iteration);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer on [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Draws an index from a (not necessarily exactly normalized) probability vector.
  std::size_t categorical(std::span<const double> probs);

  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedkl
