#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedkl/mdp.hpp"
#include "fedkl/rng.hpp"

namespace fedkl {

enum class Parameterization { TabularSoftmax, Mlp };

std::string_view parameterization_name(Parameterization p) noexcept;
Parameterization parse_parameterization(std::string_view name);

/**
 * Shape of a state -> R^outputs function. States enter as one-hot vectors.
 *
 * Tabular: one free parameter per (state, output).
 * Mlp: out = W2 tanh(W1 onehot(s) + b1) + b2, flattened as [W1 | b1 | W2 | b2]
 * with W1 stored hidden-major (hidden x states) and W2 output-major.
 */
struct Architecture {
  Parameterization kind = Parameterization::TabularSoftmax;
  std::size_t n_states = 0;
  std::size_t n_outputs = 0;
  std::size_t hidden = 0;

  std::size_t parameter_count() const noexcept;
  bool operator==(const Architecture&) const = default;
};

/// Parameters plus forward / reverse passes for a single state.
class Network {
 public:
  Network() = default;
  Network(Architecture arch, std::vector<double> params);

  /// Tabular: zeros. Mlp: hidden weights N(0, 1) (a one-hot input has one active unit),
  /// output weights N(0, output_scale^2 / hidden), zero biases.
  static Network initialize(const Architecture& arch, RngStream& rng, double output_scale = 1.0);

  const Architecture& architecture() const noexcept { return arch_; }
  std::span<const double> params() const noexcept { return params_; }
  std::span<double> mutable_params() noexcept { return params_; }
  void set_params(std::vector<double> params);

  void forward(std::size_t state, std::span<double> out) const;

  /// grad += d(out . upstream)/d(params) at `state`.
  void backward(std::size_t state, std::span<const double> upstream, std::span<double> grad) const;

 private:
  Architecture arch_;
  std::vector<double> params_;
};

/// Categorical policy: softmax over network outputs.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy() = default;
  explicit SoftmaxPolicy(Network net) : net_(std::move(net)) {}

  static SoftmaxPolicy initialize(Parameterization kind, std::size_t n_states,
                                  std::size_t n_actions, std::size_t hidden, RngStream& rng);

  const Network& network() const noexcept { return net_; }
  Network& network() noexcept { return net_; }
  std::size_t n_states() const noexcept { return net_.architecture().n_states; }
  std::size_t n_actions() const noexcept { return net_.architecture().n_outputs; }

  void probs(std::size_t state, std::span<double> out) const;
  TabularPolicy to_tabular() const;

  /// {"architecture": {...}, "parameters": [...]}
  std::string checkpoint_json() const;
  static SoftmaxPolicy from_checkpoint_json(std::string_view text);

 private:
  Network net_;
};

/// Numerically stable softmax of `logits` into `out` (may alias).
void softmax(std::span<const double> logits, std::span<double> out);

/// State-value regressor V(s).
class ValueEstimator {
 public:
  ValueEstimator() = default;
  explicit ValueEstimator(Network net) : net_(std::move(net)) {}

  static ValueEstimator initialize(Parameterization kind, std::size_t n_states, std::size_t hidden,
                                   RngStream& rng);

  double value(std::size_t state) const;
  const Network& network() const noexcept { return net_; }
  Network& network() noexcept { return net_; }

  /// Minibatch gradient descent on mean squared error; returns the final full-batch loss.
  double fit(std::span<const std::size_t> states, std::span<const double> targets,
             std::size_t epochs, std::size_t batch_size, double learning_rate, RngStream& rng);

 private:
  Network net_;
};

}  // namespace fedkl
