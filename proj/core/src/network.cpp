#include "fedkl/network.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <json.hpp>
#include <numeric>

#include "fedkl/error.hpp"

namespace fedkl {

std::string_view parameterization_name(Parameterization p) noexcept {
  return p == Parameterization::Mlp ? "mlp" : "tabular-softmax";
}

Parameterization parse_parameterization(std::string_view name) {
  if (name == "tabular-softmax") return Parameterization::TabularSoftmax;
  if (name == "mlp") return Parameterization::Mlp;
  throw ConfigError(fmt::format("unknown parameterization '{}'", name));
}

std::size_t Architecture::parameter_count() const noexcept {
  if (kind == Parameterization::TabularSoftmax) return n_states * n_outputs;
  return hidden * n_states + hidden + n_outputs * hidden + n_outputs;
}

Network::Network(Architecture arch, std::vector<double> params) : arch_(arch), params_(std::move(params)) {
  if (arch_.n_states == 0 || arch_.n_outputs == 0) throw ShapeError("network needs states and outputs");
  if (arch_.kind == Parameterization::Mlp && arch_.hidden == 0) throw ShapeError("mlp needs a hidden layer");
  if (params_.size() != arch_.parameter_count()) {
    throw ShapeError(fmt::format("expected {} parameters, got {}", arch_.parameter_count(), params_.size()));
  }
}

Network Network::initialize(const Architecture& arch, RngStream& rng, double output_scale) {
  std::vector<double> params(arch.parameter_count(), 0.0);
  if (arch.kind == Parameterization::Mlp) {
    const std::size_t H = arch.hidden;
    const std::size_t S = arch.n_states;
    for (std::size_t i = 0; i < H * S; ++i) params[i] = rng.normal();
    const std::size_t w2 = H * S + H;
    const double sd = output_scale / std::sqrt(static_cast<double>(H));
    for (std::size_t i = 0; i < arch.n_outputs * H; ++i) params[w2 + i] = sd * rng.normal();
  }
  return Network(arch, std::move(params));
}

void Network::set_params(std::vector<double> params) {
  if (params.size() != arch_.parameter_count()) throw ShapeError("parameter vector length mismatch");
  params_ = std::move(params);
}

void Network::forward(std::size_t state, std::span<double> out) const {
  const std::size_t S = arch_.n_states;
  const std::size_t O = arch_.n_outputs;
  if (state >= S || out.size() != O) throw ShapeError("forward: state or output size out of range");
  if (arch_.kind == Parameterization::TabularSoftmax) {
    std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(state * O), O, out.begin());
    return;
  }
  const std::size_t H = arch_.hidden;
  const double* w1 = params_.data();
  const double* b1 = w1 + H * S;
  const double* w2 = b1 + H;
  const double* b2 = w2 + O * H;
  for (std::size_t o = 0; o < O; ++o) out[o] = b2[o];
  for (std::size_t j = 0; j < H; ++j) {
    const double h = std::tanh(w1[j * S + state] + b1[j]);
    for (std::size_t o = 0; o < O; ++o) out[o] += w2[o * H + j] * h;
  }
}

void Network::backward(std::size_t state, std::span<const double> upstream, std::span<double> grad) const {
  const std::size_t S = arch_.n_states;
  const std::size_t O = arch_.n_outputs;
  if (state >= S || upstream.size() != O || grad.size() != params_.size()) {
    throw ShapeError("backward: size mismatch");
  }
  if (arch_.kind == Parameterization::TabularSoftmax) {
    for (std::size_t o = 0; o < O; ++o) grad[state * O + o] += upstream[o];
    return;
  }
  const std::size_t H = arch_.hidden;
  const double* w1 = params_.data();
  const double* b1 = w1 + H * S;
  const double* w2 = b1 + H;
  double* g_w1 = grad.data();
  double* g_b1 = g_w1 + H * S;
  double* g_w2 = g_b1 + H;
  double* g_b2 = g_w2 + O * H;
  for (std::size_t o = 0; o < O; ++o) g_b2[o] += upstream[o];
  for (std::size_t j = 0; j < H; ++j) {
    const double h = std::tanh(w1[j * S + state] + b1[j]);
    double dh = 0.0;
    for (std::size_t o = 0; o < O; ++o) {
      g_w2[o * H + j] += upstream[o] * h;
      dh += upstream[o] * w2[o * H + j];
    }
    const double dz = dh * (1.0 - h * h);
    g_w1[j * S + state] += dz;
    g_b1[j] += dz;
  }
}

void softmax(std::span<const double> logits, std::span<double> out) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += (out[i] = std::exp(logits[i] - top));
  for (double& x : out) x /= total;
}

SoftmaxPolicy SoftmaxPolicy::initialize(Parameterization kind, std::size_t n_states, std::size_t n_actions,
                                        std::size_t hidden, RngStream& rng) {
  const Architecture arch{kind, n_states, n_actions, kind == Parameterization::Mlp ? hidden : 0};
  // Small output weights keep the initial policy close to uniform.
  return SoftmaxPolicy(Network::initialize(arch, rng, 0.01));
}

void SoftmaxPolicy::probs(std::size_t state, std::span<double> out) const {
  net_.forward(state, out);
  softmax(out, out);
}

TabularPolicy SoftmaxPolicy::to_tabular() const {
  const std::size_t S = n_states();
  const std::size_t A = n_actions();
  std::vector<double> table(S * A);
  for (std::size_t s = 0; s < S; ++s) probs(s, std::span<double>(table.data() + s * A, A));
  return TabularPolicy(S, A, std::move(table));
}

std::string SoftmaxPolicy::checkpoint_json() const {
  const auto& arch = net_.architecture();
  nlohmann::json doc;
  doc["architecture"] = {{"kind", std::string(parameterization_name(arch.kind))},
                         {"n_states", arch.n_states},
                         {"n_outputs", arch.n_outputs},
                         {"hidden", arch.hidden}};
  doc["parameters"] = std::vector<double>(net_.params().begin(), net_.params().end());
  return doc.dump();
}

SoftmaxPolicy SoftmaxPolicy::from_checkpoint_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    const auto& a = doc.at("architecture");
    Architecture arch{parse_parameterization(a.at("kind").get<std::string>()), a.at("n_states").get<std::size_t>(),
                      a.at("n_outputs").get<std::size_t>(), a.at("hidden").get<std::size_t>()};
    return SoftmaxPolicy(Network(arch, doc.at("parameters").get<std::vector<double>>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("invalid checkpoint: {}", e.what()));
  }
}

ValueEstimator ValueEstimator::initialize(Parameterization kind, std::size_t n_states, std::size_t hidden,
                                          RngStream& rng) {
  const Architecture arch{kind, n_states, 1, kind == Parameterization::Mlp ? hidden : 0};
  return ValueEstimator(Network::initialize(arch, rng, 1.0));
}

double ValueEstimator::value(std::size_t state) const {
  double out = 0.0;
  net_.forward(state, std::span<double>(&out, 1));
  return out;
}

double ValueEstimator::fit(std::span<const std::size_t> states, std::span<const double> targets, std::size_t epochs,
                           std::size_t batch_size, double learning_rate, RngStream& rng) {
  if (states.size() != targets.size()) throw ShapeError("states and targets differ in length");
  const std::size_t n = states.size();
  if (n == 0) return 0.0;
  batch_size = std::max<std::size_t>(1, std::min(batch_size, n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(net_.params().size());
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
      const std::size_t end = std::min(n, begin + batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 2.0 / static_cast<double>(end - begin);
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t i = order[b];
        const double err = scale * (value(states[i]) - targets[i]);
        net_.backward(states[i], std::span<const double>(&err, 1), grad);
      }
      auto params = net_.mutable_params();
      for (std::size_t p = 0; p < params.size(); ++p) params[p] -= learning_rate * grad[p];
    }
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double err = value(states[i]) - targets[i];
    loss += err * err;
  }
  return loss / static_cast<double>(n);
}

}  // namespace fedkl
