#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "podnet/autodiff.hpp"
#include "podnet/rng.hpp"
#include "podnet/tensor.hpp"

namespace podnet::nn {

struct LstmState {
  std::vector<double> hidden;
  std::vector<double> cell;

  static LstmState zeros(std::size_t h) { return {std::vector<double>(h, 0.0), std::vector<double>(h, 0.0)}; }
};

// --- initialization ---
// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero; the
// LSTM forget-gate bias starts at 1.0.

inline Tensor uniform_init(std::size_t rows, std::size_t cols, SplitRng& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

// Chained affine layers: dims = {in, hidden..., out}. Layer i owns
// "<prefix>.l<i>.W" and "<prefix>.l<i>.b".
inline void mlp_init(ParamStore& params, const std::string& prefix, const std::vector<std::size_t>& dims,
                     SplitRng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("mlp_init: need at least input and output dimensions");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::string layer = prefix + ".l" + std::to_string(i);
    params.add(layer + ".W", uniform_init(dims[i + 1], dims[i], rng));
    params.add(layer + ".b", Tensor::zeros({dims[i + 1]}));
  }
}

// Stacked gate parameters, rows ordered [input, forget, candidate, output]:
// "<prefix>.Wx" (4h x in), "<prefix>.Wh" (4h x h), "<prefix>.b" (4h).
inline void lstm_init(ParamStore& params, const std::string& prefix, std::size_t input_size, std::size_t hidden,
                      SplitRng& rng) {
  if (hidden < 1) throw std::invalid_argument("lstm_init: hidden size must be >= 1");
  params.add(prefix + ".Wx", uniform_init(4 * hidden, input_size, rng));
  params.add(prefix + ".Wh", uniform_init(4 * hidden, hidden, rng));
  Tensor b = Tensor::zeros({4 * hidden});
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b.data[i] = 1.0;
  params.add(prefix + ".b", b);
}

// --- plain forward passes (no tape; used for inference and planning) ---

inline std::size_t mlp_layer_count(const ParamStore& params, const std::string& prefix) {
  std::size_t n = 0;
  while (params.contains(prefix + ".l" + std::to_string(n) + ".W")) ++n;
  if (n == 0) throw std::invalid_argument("mlp_forward: no layers under prefix '" + prefix + "'");
  return n;
}

// Summation order mirrors the graph ops (dot product first, bias last) so
// tape and plain forwards agree bitwise.
inline std::vector<double> matvec(const Tensor& w, const std::vector<double>& x, const std::string& context) {
  if (w.cols() != x.size())
    throw std::invalid_argument(context + ": weight expects input size " + std::to_string(w.cols()) + ", got " +
                                std::to_string(x.size()));
  std::vector<double> y(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double acc = 0.0;
    const double* row = w.data.data() + i * w.cols();
    for (std::size_t j = 0; j < x.size(); ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

inline std::vector<double> affine(const Tensor& w, const Tensor& b, const std::vector<double>& x,
                                  const std::string& context) {
  std::vector<double> y = matvec(w, x, context);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.data[i];
  return y;
}

inline std::vector<double> mlp_forward(const ParamStore& params, const std::string& prefix,
                                       const std::vector<double>& input) {
  const std::size_t layers = mlp_layer_count(params, prefix);
  std::vector<double> x = input;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string layer = prefix + ".l" + std::to_string(i);
    x = affine(params.at(layer + ".W"), params.at(layer + ".b"), x, "mlp_forward(" + layer + ")");
    if (i + 1 < layers)
      for (double& v : x) v = std::tanh(v);
  }
  return x;
}

inline std::pair<std::vector<double>, LstmState> lstm_step(const ParamStore& params, const std::string& prefix,
                                                           const std::vector<double>& input, const LstmState& state) {
  const Tensor& wx = params.at(prefix + ".Wx");
  const Tensor& wh = params.at(prefix + ".Wh");
  const Tensor& b = params.at(prefix + ".b");
  const std::size_t h = wh.cols();
  if (state.hidden.size() != h || state.cell.size() != h)
    throw std::invalid_argument("lstm_step: state size " + std::to_string(state.hidden.size()) +
                                " does not match hidden size " + std::to_string(h));

  std::vector<double> gates = matvec(wx, input, "lstm_step(" + prefix + ".Wx)");
  const std::vector<double> rec = matvec(wh, state.hidden, "lstm_step(" + prefix + ".Wh)");
  for (std::size_t i = 0; i < 4 * h; ++i) gates[i] = (gates[i] + rec[i]) + b.data[i];

  LstmState next = LstmState::zeros(h);
  for (std::size_t i = 0; i < h; ++i) {
    const double ig = 1.0 / (1.0 + std::exp(-gates[i]));
    const double fg = 1.0 / (1.0 + std::exp(-gates[h + i]));
    const double cand = std::tanh(gates[2 * h + i]);
    const double og = 1.0 / (1.0 + std::exp(-gates[3 * h + i]));
    next.cell[i] = fg * state.cell[i] + ig * cand;
    next.hidden[i] = og * std::tanh(next.cell[i]);
  }
  return {next.hidden, next};
}

// --- graph forward passes (tape; used during training) ---

inline Graph::NodeId mlp_forward(Graph& g, const ParamStore& params, const std::string& prefix, Graph::NodeId input) {
  const std::size_t layers = mlp_layer_count(params, prefix);
  Graph::NodeId x = input;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string layer = prefix + ".l" + std::to_string(i);
    x = g.add(g.matvec(layer + ".W", x), g.param(layer + ".b"));
    if (i + 1 < layers) x = g.tanh(x);
  }
  return x;
}

struct LstmNodes {
  Graph::NodeId hidden;
  Graph::NodeId cell;
};

inline LstmNodes lstm_step(Graph& g, const ParamStore& params, const std::string& prefix, Graph::NodeId input,
                           const LstmNodes& state) {
  const std::size_t h = params.at(prefix + ".Wh").cols();
  Graph::NodeId gates =
      g.add(g.add(g.matvec(prefix + ".Wx", input), g.matvec(prefix + ".Wh", state.hidden)), g.param(prefix + ".b"));
  Graph::NodeId ig = g.sigmoid(g.slice(gates, 0, h));
  Graph::NodeId fg = g.sigmoid(g.slice(gates, h, 2 * h));
  Graph::NodeId cand = g.tanh(g.slice(gates, 2 * h, 3 * h));
  Graph::NodeId og = g.sigmoid(g.slice(gates, 3 * h, 4 * h));
  Graph::NodeId cell = g.add(g.hadamard(fg, state.cell), g.hadamard(ig, cand));
  Graph::NodeId hidden = g.hadamard(og, g.tanh(cell));
  return {hidden, cell};
}

// --- optimizer ---

struct AdamState {
  ParamStore m;
  ParamStore v;
  std::int64_t step = 0;

  static AdamState init(const ParamStore& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

inline void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, double lr) {
  params.require_same_layout(grads, "adam_step: gradients");
  params.require_same_layout(state.m, "adam_step: first moment");
  params.require_same_layout(state.v, "adam_step: second moment");
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  state.step += 1;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (auto& [name, tensor] : params) {
    const auto& g = grads.at(name).data;
    auto& m = state.m.at(name).data;
    auto& v = state.v.at(name).data;
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      tensor.data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
    }
  }
}

}  // namespace podnet::nn
