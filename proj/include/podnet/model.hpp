#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "podnet/autodiff.hpp"
#include "podnet/data.hpp"
#include "podnet/latent.hpp"
#include "podnet/nn.hpp"
#include "podnet/rng.hpp"
#include "podnet/tensor.hpp"

namespace podnet::model {

// Weights of the three networks plus everything needed to run them on raw
// states: inference (LSTM over concat(s_t, c_{t-1}) with a K-logit head),
// policy (MLP over concat(s_t, c_t) to an action), dynamics (MLP over
// concat(s_t, c_t) to the next downsampled state).
struct PodnetParams {
  nn::ParamStore params;
  data::NormStats norm;
  std::size_t k = 0;  // number of options
  std::size_t d = 0;  // state dimension
  std::size_t m = 0;  // action dimension
  std::size_t h = 0;  // LSTM hidden size
};

inline PodnetParams init_podnet(std::size_t k, std::size_t d, std::size_t m, std::size_t hidden,
                                std::size_t mlp_width, SplitRng& rng) {
  if (k < 1) throw std::invalid_argument("init_podnet: need K >= 1");
  if (d < 1 || m < 1) throw std::invalid_argument("init_podnet: need positive state/action dimensions");
  PodnetParams p;
  p.k = k;
  p.d = d;
  p.m = m;
  p.h = hidden;
  nn::lstm_init(p.params, "inference.lstm", d + k, hidden, rng);
  p.params.add("inference.head.W", nn::uniform_init(k, hidden, rng));
  p.params.add("inference.head.b", nn::Tensor::zeros({k}));
  nn::mlp_init(p.params, "policy", {d + k, mlp_width, mlp_width, m}, rng);
  nn::mlp_init(p.params, "dynamics", {d + k, mlp_width, mlp_width, d}, rng);
  p.norm.mean.assign(d, 0.0);
  p.norm.std_dev.assign(d, 1.0);
  return p;
}

enum class InferMode { kSampled, kGreedy };

struct OptionAssignment {
  std::vector<latent::OptionLabel> labels;
  std::vector<latent::CategoricalPosterior> posteriors;
};

// Runs the recurrent inference network over a normalized state sequence
// s_0..s_T and assigns an option to each of the T steps. c_{-1} and the LSTM
// state start at zero; the hard one-hot label is fed back.
inline OptionAssignment infer_options(const PodnetParams& p, const std::vector<std::vector<double>>& states,
                                      double tau, SplitRng& rng, InferMode mode) {
  if (states.size() < 2) throw std::invalid_argument("infer_options: need at least 2 states");
  for (const auto& s : states)
    if (s.size() != p.d) throw std::invalid_argument("infer_options: state dimension does not match model");

  const std::size_t t_count = states.size() - 1;
  OptionAssignment out;
  out.labels.reserve(t_count);
  out.posteriors.reserve(t_count);

  if (p.k == 1) {  // degenerate baseline: a single always-on option
    for (std::size_t t = 0; t < t_count; ++t) {
      out.labels.push_back({{1.0}, {1.0}});
      out.posteriors.push_back({{0.0}, {1.0}});
    }
    return out;
  }

  nn::LstmState state = nn::LstmState::zeros(p.h);
  std::vector<double> prev(p.k, 0.0);
  for (std::size_t t = 0; t < t_count; ++t) {
    std::vector<double> input = states[t];
    input.insert(input.end(), prev.begin(), prev.end());
    auto [hidden, next_state] = nn::lstm_step(p.params, "inference.lstm", input, state);
    state = next_state;
    const std::vector<double> logits =
        nn::affine(p.params.at("inference.head.W"), p.params.at("inference.head.b"), hidden, "infer_options(head)");
    latent::OptionLabel label =
        mode == InferMode::kSampled ? latent::sample_gumbel_softmax(logits, tau, rng) : latent::greedy_label(logits);
    out.posteriors.push_back({logits, latent::softmax(logits)});
    prev = label.hard;
    out.labels.push_back(std::move(label));
  }
  return out;
}

inline std::vector<double> policy_action(const PodnetParams& p, const std::vector<double>& state,
                                         const latent::OptionLabel& option) {
  if (state.size() != p.d || option.hard.size() != p.k)
    throw std::invalid_argument("policy_action: dimension mismatch with model");
  std::vector<double> input = state;
  input.insert(input.end(), option.hard.begin(), option.hard.end());
  return nn::mlp_forward(p.params, "policy", input);
}

inline std::vector<double> dynamics_predict(const PodnetParams& p, const std::vector<double>& state,
                                            const latent::OptionLabel& option) {
  if (state.size() != p.d || option.hard.size() != p.k)
    throw std::invalid_argument("dynamics_predict: dimension mismatch with model");
  std::vector<double> input = state;
  input.insert(input.end(), option.hard.begin(), option.hard.end());
  return nn::mlp_forward(p.params, "dynamics", input);
}

// Iterated one-step predictions under the given per-step options; returns
// H+1 states including the start.
inline std::vector<std::vector<double>> rollout_dynamics(const PodnetParams& p, const std::vector<double>& state,
                                                         const std::vector<latent::OptionLabel>& options,
                                                         std::size_t horizon) {
  if (horizon > options.size())
    throw std::invalid_argument("rollout_dynamics: horizon " + std::to_string(horizon) + " exceeds " +
                                std::to_string(options.size()) + " provided options");
  std::vector<std::vector<double>> out;
  out.reserve(horizon + 1);
  out.push_back(state);
  for (std::size_t j = 0; j < horizon; ++j) out.push_back(dynamics_predict(p, out.back(), options[j]));
  return out;
}

enum class KlMode { kPerStep, kMarginal };

struct LossHyper {
  double beta = 0.1;
  double tau = 1.0;
  std::size_t horizon = 3;
  KlMode kl_mode = KlMode::kPerStep;
  double kl_sign = 1.0;
};

struct LossBreakdown {
  double total = 0.0;
  double odc = 0.0;
  double bc = 0.0;
  double kl = 0.0;
};

// Gumbel noise for one loss evaluation: [trajectory][step][class]. Trajectory
// b draws from rng substream b, one K-vector per step, so the graph forward
// consumes noise exactly the way plain sampled inference would.
using NoiseTable = std::vector<std::vector<std::vector<double>>>;

inline NoiseTable draw_noise(const std::vector<const data::Trajectory*>& batch, std::size_t k, const SplitRng& rng) {
  NoiseTable noise(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    SplitRng sub = rng.split(b);
    noise[b].resize(batch[b]->actions.size());
    for (auto& step : noise[b]) {
      step.resize(k);
      for (double& v : step) v = sub.gumbel();
    }
  }
  return noise;
}

inline NoiseTable zero_noise(const std::vector<const data::Trajectory*>& batch, std::size_t k) {
  NoiseTable noise(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b)
    noise[b].assign(batch[b]->actions.size(), std::vector<double>(k, 0.0));
  return noise;
}

struct LossNodes {
  nn::Graph::NodeId total;
  nn::Graph::NodeId odc;
  nn::Graph::NodeId bc;
  nn::Graph::NodeId kl;
};

// Builds the full training objective over a batch of downsampled normalized
// trajectories:
//   total = odc + bc + kl_sign * beta * kl
// where odc averages iterated multi-step dynamics errors over horizon
// offsets 1..H, bc averages squared policy errors, and kl is the divergence
// of the inferred posterior from the uniform prior (per-step or batch
// marginal).
inline LossNodes build_loss(nn::Graph& g, const PodnetParams& p, const std::vector<const data::Trajectory*>& batch,
                            const LossHyper& hyper, const NoiseTable& noise) {
  if (batch.empty()) throw std::invalid_argument("build_loss: empty batch");
  if (noise.size() != batch.size()) throw std::invalid_argument("build_loss: noise table does not match batch");
  if (!(hyper.tau > 0.0)) throw std::invalid_argument("build_loss: tau must be > 0");

  using NodeId = nn::Graph::NodeId;
  std::vector<NodeId> odc_terms, bc_terms, kl_terms, posterior_nodes;
  std::size_t total_steps = 0;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const data::Trajectory& traj = *batch[b];
    const std::size_t t_count = traj.actions.size();
    // length contract counts states, so a single transition supports H = 1
    if (traj.states.size() <= hyper.horizon)
      throw std::invalid_argument("build_loss: trajectory '" + traj.id + "' has " + std::to_string(traj.states.size()) +
                                  " states, needs more than horizon " + std::to_string(hyper.horizon));
    if (traj.states.front().size() != p.d || traj.actions.front().size() != p.m)
      throw std::invalid_argument("build_loss: trajectory '" + traj.id + "' does not match model dimensions");

    // option inference over the whole trajectory
    std::vector<NodeId> hard(t_count);
    nn::LstmNodes state{g.constant(std::vector<double>(p.h, 0.0)), g.constant(std::vector<double>(p.h, 0.0))};
    NodeId prev = g.constant(std::vector<double>(p.k, p.k == 1 ? 1.0 : 0.0));
    std::vector<NodeId> traj_posteriors(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      if (p.k == 1) {
        hard[t] = prev;
        continue;
      }
      NodeId input = g.concat(g.constant(traj.states[t]), prev);
      state = nn::lstm_step(g, p.params, "inference.lstm", input, state);
      NodeId logits = g.add(g.matvec("inference.head.W", state.hidden), g.param("inference.head.b"));
      traj_posteriors[t] = g.softmax(logits);
      NodeId soft = g.softmax(g.scale(g.add(logits, g.constant(noise[b][t])), 1.0 / hyper.tau));
      hard[t] = g.straight_through(soft);
      prev = hard[t];
    }

    // behavior cloning: mean over steps of squared action error
    std::vector<NodeId> traj_bc(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      NodeId action = nn::mlp_forward(g, p.params, "policy", g.concat(g.constant(traj.states[t]), hard[t]));
      traj_bc[t] = g.squared_error(action, traj.actions[t]);
    }
    bc_terms.push_back(g.weighted_sum(traj_bc, std::vector<double>(t_count, 1.0 / static_cast<double>(t_count))));

    // option dynamics consistency: iterated rollouts against the demo states
    std::vector<NodeId> traj_odc;
    for (std::size_t t = 0; t < t_count; ++t) {
      NodeId pred = g.constant(traj.states[t]);
      const std::size_t reach = std::min(hyper.horizon, t_count - t);
      for (std::size_t j = 1; j <= reach; ++j) {
        pred = nn::mlp_forward(g, p.params, "dynamics", g.concat(pred, hard[t + j - 1]));
        traj_odc.push_back(g.squared_error(pred, traj.states[t + j]));
      }
    }
    odc_terms.push_back(
        g.weighted_sum(traj_odc, std::vector<double>(traj_odc.size(), 1.0 / static_cast<double>(traj_odc.size()))));

    if (p.k > 1) {
      if (hyper.kl_mode == KlMode::kPerStep) {
        std::vector<NodeId> traj_kl(t_count);
        for (std::size_t t = 0; t < t_count; ++t) traj_kl[t] = g.kl_to_uniform(traj_posteriors[t]);
        kl_terms.push_back(
            g.weighted_sum(traj_kl, std::vector<double>(t_count, 1.0 / static_cast<double>(t_count))));
      } else {
        for (NodeId id : traj_posteriors) posterior_nodes.push_back(id);
        total_steps += t_count;
      }
    }
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossNodes nodes{};
  nodes.odc = g.weighted_sum(odc_terms, std::vector<double>(odc_terms.size(), inv_b));
  nodes.bc = g.weighted_sum(bc_terms, std::vector<double>(bc_terms.size(), inv_b));
  if (p.k == 1) {
    nodes.kl = g.constant({0.0});
  } else if (hyper.kl_mode == KlMode::kPerStep) {
    nodes.kl = g.weighted_sum(kl_terms, std::vector<double>(kl_terms.size(), inv_b));
  } else {
    // KL of the batch-averaged posterior to uniform
    NodeId pooled = g.weighted_sum(
        posterior_nodes, std::vector<double>(posterior_nodes.size(), 1.0 / static_cast<double>(total_steps)));
    nodes.kl = g.kl_to_uniform(pooled);
  }
  nodes.total = g.weighted_sum({nodes.odc, nodes.bc, nodes.kl}, {1.0, 1.0, hyper.kl_sign * hyper.beta});
  return nodes;
}

inline LossBreakdown read_breakdown(const nn::Graph& g, const LossNodes& nodes) {
  return {g.scalar(nodes.total), g.scalar(nodes.odc), g.scalar(nodes.bc), g.scalar(nodes.kl)};
}

inline LossBreakdown compute_loss(const PodnetParams& p, const std::vector<const data::Trajectory*>& batch,
                                  const LossHyper& hyper, const NoiseTable& noise) {
  nn::Graph g(p.params, nn::Mode::kHard);
  return read_breakdown(g, build_loss(g, p, batch, hyper, noise));
}

inline LossBreakdown compute_loss(const PodnetParams& p, const std::vector<const data::Trajectory*>& batch,
                                  const LossHyper& hyper, const SplitRng& rng) {
  return compute_loss(p, batch, hyper, draw_noise(batch, p.k, rng));
}

// One optimizer-step evaluation: forward, backward, breakdown.
inline LossBreakdown loss_and_gradients(const PodnetParams& p, const std::vector<const data::Trajectory*>& batch,
                                        const LossHyper& hyper, const NoiseTable& noise, nn::ParamStore& grads) {
  nn::Graph g(p.params, nn::Mode::kHard);
  LossNodes nodes = build_loss(g, p, batch, hyper, noise);
  grads = g.backward(nodes.total);
  return read_breakdown(g, nodes);
}

inline std::vector<const data::Trajectory*> batch_view(const data::Dataset& dataset) {
  std::vector<const data::Trajectory*> view;
  view.reserve(dataset.trajectories.size());
  for (const auto& t : dataset.trajectories) view.push_back(&t);
  return view;
}

}  // namespace podnet::model
