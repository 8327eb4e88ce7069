#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "podnet/tensor.hpp"

namespace podnet::nn {

// Whether straight-through nodes emit the hard one-hot (training/inference)
// or stay on the soft path (so finite differences see the same function the
// backward pass differentiates).
enum class Mode { kHard, kRelaxed };

// Reverse-mode tape over vector-valued nodes. A graph is built once per loss
// evaluation against an immutable ParamStore; backward() returns gradients in
// a store with the same layout.
class Graph {
 public:
  using NodeId = std::size_t;

  Graph(const ParamStore& params, Mode mode) : params_(params), mode_(mode) {}

  Mode mode() const { return mode_; }

  NodeId param(const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return it->second;
    const Tensor& t = params_.at(name);
    if (t.shape.size() != 1)
      throw std::invalid_argument("Graph::param: '" + name + "' is not a vector; matrices enter via matvec");
    NodeId id = push(Op::kParam, {}, t.data);
    nodes_[id].pname = name;
    param_nodes_.emplace(name, id);
    return id;
  }

  NodeId constant(std::vector<double> v) { return push(Op::kConst, {}, std::move(v)); }

  // y = W x for a 2-D parameter tensor W.
  NodeId matvec(const std::string& w_name, NodeId x) {
    const Tensor& w = params_.at(w_name);
    const std::size_t rows = w.rows(), cols = w.cols();
    const auto& xv = val(x);
    if (xv.size() != cols)
      throw std::invalid_argument("Graph::matvec: '" + w_name + "' has " + std::to_string(cols) +
                                  " columns, input has size " + std::to_string(xv.size()));
    std::vector<double> y(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      const double* row = w.data.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) acc += row[j] * xv[j];
      y[i] = acc;
    }
    NodeId id = push(Op::kMatvec, {x}, std::move(y));
    nodes_[id].pname = w_name;
    return id;
  }

  NodeId add(NodeId a, NodeId b) { return binary(Op::kAdd, a, b, [](double x, double y) { return x + y; }); }
  NodeId sub(NodeId a, NodeId b) { return binary(Op::kSub, a, b, [](double x, double y) { return x - y; }); }
  NodeId hadamard(NodeId a, NodeId b) {
    return binary(Op::kHadamard, a, b, [](double x, double y) { return x * y; });
  }

  NodeId scale(NodeId a, double c) {
    std::vector<double> y = val(a);
    for (double& v : y) v *= c;
    NodeId id = push(Op::kScale, {a}, std::move(y));
    nodes_[id].c = c;
    return id;
  }

  NodeId concat(NodeId a, NodeId b) {
    std::vector<double> y = val(a);
    y.insert(y.end(), val(b).begin(), val(b).end());
    return push(Op::kConcat, {a, b}, std::move(y));
  }

  NodeId slice(NodeId a, std::size_t lo, std::size_t hi) {
    const auto& xv = val(a);
    if (lo > hi || hi > xv.size()) throw std::invalid_argument("Graph::slice: range out of bounds");
    NodeId id = push(Op::kSlice, {a}, std::vector<double>(xv.begin() + static_cast<std::ptrdiff_t>(lo),
                                                          xv.begin() + static_cast<std::ptrdiff_t>(hi)));
    nodes_[id].lo = lo;
    return id;
  }

  NodeId tanh(NodeId a) {
    std::vector<double> y = val(a);
    for (double& v : y) v = std::tanh(v);
    return push(Op::kTanh, {a}, std::move(y));
  }

  NodeId sigmoid(NodeId a) {
    std::vector<double> y = val(a);
    for (double& v : y) v = 1.0 / (1.0 + std::exp(-v));
    return push(Op::kSigmoid, {a}, std::move(y));
  }

  NodeId softmax(NodeId a) {
    std::vector<double> y = val(a);
    double mx = y[0];
    for (double v : y) mx = std::max(mx, v);
    double z = 0.0;
    for (double& v : y) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : y) v /= z;
    return push(Op::kSoftmax, {a}, std::move(y));
  }

  // Forward: hard one-hot at the argmax of the soft input (ties to the lowest
  // index), or the soft input unchanged in relaxed mode. Backward: identity,
  // so gradients always flow through the soft path.
  NodeId straight_through(NodeId soft) {
    const auto& p = val(soft);
    std::vector<double> y;
    if (mode_ == Mode::kRelaxed) {
      y = p;
    } else {
      y.assign(p.size(), 0.0);
      std::size_t best = 0;
      for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
      y[best] = 1.0;
    }
    return push(Op::kStraightThrough, {soft}, std::move(y));
  }

  NodeId sum(NodeId a) {
    double acc = 0.0;
    for (double v : val(a)) acc += v;
    return push(Op::kSum, {a}, {acc});
  }

  // Scalar sum of squared differences against a fixed target.
  NodeId squared_error(NodeId a, const std::vector<double>& target) {
    const auto& xv = val(a);
    if (xv.size() != target.size()) throw std::invalid_argument("Graph::squared_error: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double d = xv[i] - target[i];
      acc += d * d;
    }
    NodeId id = push(Op::kSquaredError, {a}, {acc});
    nodes_[id].aux = target;
    return id;
  }

  // Scalar KL(p || uniform over K) = sum p_i ln(p_i K), components clamped at
  // 1e-12 before the log; clamped components contribute zero gradient.
  NodeId kl_to_uniform(NodeId probs) {
    const auto& p = val(probs);
    const double k = static_cast<double>(p.size());
    double acc = 0.0;
    for (double v : p) {
      const double q = std::max(v, 1e-12);
      acc += q * std::log(q * k);
    }
    return push(Op::kKlToUniform, {probs}, {acc});
  }

  // y = sum_j w_j x_j over same-sized vectors (commonly scalars).
  NodeId weighted_sum(const std::vector<NodeId>& xs, const std::vector<double>& ws) {
    if (xs.empty() || xs.size() != ws.size())
      throw std::invalid_argument("Graph::weighted_sum: needs one weight per input");
    const std::size_t n = val(xs[0]).size();
    std::vector<double> y(n, 0.0);
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const auto& xv = val(xs[j]);
      if (xv.size() != n) throw std::invalid_argument("Graph::weighted_sum: input sizes differ");
      for (std::size_t i = 0; i < n; ++i) y[i] += ws[j] * xv[i];
    }
    NodeId id = push(Op::kWeightedSum, xs, std::move(y));
    nodes_[id].aux = ws;
    return id;
  }

  const std::vector<double>& value(NodeId id) const { return nodes_[id].value; }

  double scalar(NodeId id) const {
    const auto& v = nodes_[id].value;
    if (v.size() != 1) throw std::invalid_argument("Graph::scalar: node is not scalar");
    return v[0];
  }

  // Reverse sweep from a scalar loss node; gradients for every parameter
  // tensor, zero where the loss does not depend on it.
  ParamStore backward(NodeId loss) const {
    const double l = scalar(loss);
    if (!std::isfinite(l)) throw std::runtime_error("Graph::backward: loss is not finite");

    ParamStore grads = params_.zeros_like();
    std::vector<std::vector<double>> adj(nodes_.size());
    adj[loss] = {1.0};

    for (std::size_t idx = loss + 1; idx-- > 0;) {
      const Node& n = nodes_[idx];
      const auto& g = adj[idx];
      if (g.empty()) continue;
      switch (n.op) {
        case Op::kParam: {
          auto& t = grads.at(n.pname).data;
          for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i];
          break;
        }
        case Op::kConst:
          break;
        case Op::kMatvec: {
          const Tensor& w = params_.at(n.pname);
          const std::size_t rows = w.rows(), cols = w.cols();
          const auto& xv = nodes_[n.in[0]].value;
          auto& gx = grad_of(adj, n.in[0]);
          auto& gw = grads.at(n.pname).data;
          for (std::size_t i = 0; i < rows; ++i) {
            const double gi = g[i];
            const double* row = w.data.data() + i * cols;
            double* grow = gw.data() + i * cols;
            for (std::size_t j = 0; j < cols; ++j) {
              gx[j] += row[j] * gi;
              grow[j] += gi * xv[j];
            }
          }
          break;
        }
        case Op::kAdd: {
          accumulate(adj, n.in[0], g, 1.0);
          accumulate(adj, n.in[1], g, 1.0);
          break;
        }
        case Op::kSub: {
          accumulate(adj, n.in[0], g, 1.0);
          accumulate(adj, n.in[1], g, -1.0);
          break;
        }
        case Op::kHadamard: {
          const auto& av = nodes_[n.in[0]].value;
          const auto& bv = nodes_[n.in[1]].value;
          auto& ga = grad_of(adj, n.in[0]);
          auto& gb = grad_of(adj, n.in[1]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bv[i];
            gb[i] += g[i] * av[i];
          }
          break;
        }
        case Op::kScale:
          accumulate(adj, n.in[0], g, n.c);
          break;
        case Op::kConcat: {
          const std::size_t na = nodes_[n.in[0]].value.size();
          auto& ga = grad_of(adj, n.in[0]);
          auto& gb = grad_of(adj, n.in[1]);
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
          for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
          break;
        }
        case Op::kSlice: {
          auto& ga = grad_of(adj, n.in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[n.lo + i] += g[i];
          break;
        }
        case Op::kTanh: {
          auto& ga = grad_of(adj, n.in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
          break;
        }
        case Op::kSigmoid: {
          auto& ga = grad_of(adj, n.in[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
          break;
        }
        case Op::kSoftmax: {
          auto& ga = grad_of(adj, n.in[0]);
          double dot = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * n.value[i];
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.value[i] * (g[i] - dot);
          break;
        }
        case Op::kStraightThrough:
          accumulate(adj, n.in[0], g, 1.0);
          break;
        case Op::kSum: {
          auto& ga = grad_of(adj, n.in[0]);
          for (double& v : ga) v += g[0];
          break;
        }
        case Op::kSquaredError: {
          const auto& xv = nodes_[n.in[0]].value;
          auto& ga = grad_of(adj, n.in[0]);
          for (std::size_t i = 0; i < xv.size(); ++i) ga[i] += 2.0 * (xv[i] - n.aux[i]) * g[0];
          break;
        }
        case Op::kKlToUniform: {
          const auto& p = nodes_[n.in[0]].value;
          const double k = static_cast<double>(p.size());
          auto& ga = grad_of(adj, n.in[0]);
          for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] > 1e-12) ga[i] += (std::log(p[i] * k) + 1.0) * g[0];
          break;
        }
        case Op::kWeightedSum: {
          for (std::size_t j = 0; j < n.in.size(); ++j) accumulate(adj, n.in[j], g, n.aux[j]);
          break;
        }
      }
    }
    return grads;
  }

 private:
  enum class Op {
    kParam,
    kConst,
    kMatvec,
    kAdd,
    kSub,
    kHadamard,
    kScale,
    kConcat,
    kSlice,
    kTanh,
    kSigmoid,
    kSoftmax,
    kStraightThrough,
    kSum,
    kSquaredError,
    kKlToUniform,
    kWeightedSum,
  };

  struct Node {
    Op op;
    std::vector<NodeId> in;
    std::vector<double> value;
    std::string pname;        // kParam / kMatvec
    double c = 0.0;           // kScale
    std::size_t lo = 0;       // kSlice
    std::vector<double> aux;  // kSquaredError target / kWeightedSum weights
  };

  const std::vector<double>& val(NodeId id) const {
    if (id >= nodes_.size()) throw std::invalid_argument("Graph: node id out of range");
    return nodes_[id].value;
  }

  NodeId push(Op op, std::vector<NodeId> in, std::vector<double> value) {
    nodes_.push_back(Node{op, std::move(in), std::move(value), {}, 0.0, 0, {}});
    return nodes_.size() - 1;
  }

  template <class F>
  NodeId binary(Op op, NodeId a, NodeId b, F f) {
    const auto& av = val(a);
    const auto& bv = val(b);
    if (av.size() != bv.size()) throw std::invalid_argument("Graph: binary op size mismatch");
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = f(av[i], bv[i]);
    return push(op, {a, b}, std::move(y));
  }

  std::vector<double>& grad_of(std::vector<std::vector<double>>& adj, NodeId id) const {
    if (adj[id].empty()) adj[id].assign(nodes_[id].value.size(), 0.0);
    return adj[id];
  }

  void accumulate(std::vector<std::vector<double>>& adj, NodeId id, const std::vector<double>& g, double w) const {
    auto& ga = grad_of(adj, id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += w * g[i];
  }

  const ParamStore& params_;
  Mode mode_;
  std::vector<Node> nodes_;
  std::map<std::string, NodeId> param_nodes_;
};

// A loss is described by a builder so it can be re-evaluated on perturbed
// parameters (finite differences) and differentiated (tape backward) from the
// same definition.
using LossBuilder = std::function<Graph::NodeId(Graph&)>;

inline double eval_loss(const ParamStore& params, Mode mode, const LossBuilder& build) {
  Graph g(params, mode);
  return g.scalar(build(g));
}

inline ParamStore loss_gradients(const ParamStore& params, Mode mode, const LossBuilder& build) {
  Graph g(params, mode);
  return g.backward(build(g));
}

// Central finite differences per scalar parameter against the tape gradient;
// returns the worst relative error with denominator max(|a|, |b|, 1e-12).
inline double finite_difference_check(const ParamStore& params, Mode mode, const LossBuilder& build, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be > 0");
  const ParamStore analytic = loss_gradients(params, mode, build);
  ParamStore work = params;
  double worst = 0.0;
  for (const auto& [name, tensor] : params) {
    auto& data = work.at(name).data;
    const auto& exact = analytic.at(name).data;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = eval_loss(work, mode, build);
      data[i] = saved - eps;
      const double down = eval_loss(work, mode, build);
      data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(fd), std::abs(exact[i]), 1e-12});
      worst = std::max(worst, std::abs(fd - exact[i]) / denom);
    }
    (void)tensor;
  }
  return worst;
}

}  // namespace podnet::nn
