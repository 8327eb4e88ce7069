#pragma once

// Offline training over demonstration datasets: the epoch loop with Adam and
// a temperature schedule, held-out behavior-cloning evaluation, hill-climb
// discovery of the option count, and checkpoint/history serialization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "podnet/data.hpp"
#include "podnet/jsonio.hpp"
#include "podnet/latent.hpp"
#include "podnet/model.hpp"
#include "podnet/nn.hpp"
#include "podnet/rng.hpp"
#include "podnet/tensor.hpp"

namespace podnet::training {

constexpr int kCheckpointVersion = 1;

struct TrainConfig {
  std::size_t k = 3;  // number of options; 1 only for the degenerate baseline
  double beta = 0.1;  // KL weight
  double lr = 1e-3;
  std::size_t epochs = 60;
  std::size_t batch_size = 16;  // trajectories per optimizer step
  std::size_t stride = 5;       // downsampling stride
  std::size_t horizon = 3;      // dynamics-consistency prediction horizon
  double tau0 = 1.0;
  double tau_min = 0.5;
  double tau_decay_fraction = 0.8;  // share of optimizer steps spent decaying
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
  model::KlMode kl_mode = model::KlMode::kPerStep;
  double kl_sign = 1.0;
  std::size_t hidden = 64;     // LSTM hidden size
  std::size_t mlp_width = 64;  // policy/dynamics hidden layer width
};

inline void validate(const TrainConfig& c) {
  if (c.k < 1) throw std::invalid_argument("TrainConfig: need k >= 1");
  if (!(c.beta >= 0.0)) throw std::invalid_argument("TrainConfig: need beta >= 0");
  if (!(c.lr > 0.0)) throw std::invalid_argument("TrainConfig: need lr > 0");
  if (c.epochs < 1) throw std::invalid_argument("TrainConfig: need epochs >= 1");
  if (c.batch_size < 1) throw std::invalid_argument("TrainConfig: need batch_size >= 1");
  if (c.stride < 1) throw std::invalid_argument("TrainConfig: need stride >= 1");
  if (c.horizon < 1) throw std::invalid_argument("TrainConfig: need horizon >= 1");
  if (!(c.tau_min > 0.0) || c.tau0 < c.tau_min)
    throw std::invalid_argument("TrainConfig: need tau0 >= tau_min > 0");
  if (!(c.tau_decay_fraction > 0.0) || c.tau_decay_fraction > 1.0)
    throw std::invalid_argument("TrainConfig: need tau_decay_fraction in (0, 1]");
  if (!(c.holdout_fraction > 0.0) || !(c.holdout_fraction < 1.0))
    throw std::invalid_argument("TrainConfig: need holdout_fraction in (0, 1)");
  if (c.kl_sign != 1.0 && c.kl_sign != -1.0)
    throw std::invalid_argument("TrainConfig: kl_sign must be +1 or -1");
  if (c.hidden < 1 || c.mlp_width < 1)
    throw std::invalid_argument("TrainConfig: need positive network sizes");
}

struct EpochRecord {
  std::size_t epoch = 0;
  double total = 0.0;
  double odc = 0.0;
  double bc = 0.0;
  double kl = 0.0;
  double heldout_bc = 0.0;
  double tau = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  TrainConfig config;
  data::NormStats norm;
  nn::ParamStore params;
  EpochRecord final_epoch;  // last training epoch; not serialized
};

inline model::PodnetParams model_from_checkpoint(const Checkpoint& ckpt) {
  model::PodnetParams p;
  p.params = ckpt.params;
  p.norm = ckpt.norm;
  p.k = ckpt.config.k;
  p.d = ckpt.norm.mean.size();
  const std::size_t layers = nn::mlp_layer_count(ckpt.params, "policy");
  p.m = ckpt.params.at("policy.l" + std::to_string(layers - 1) + ".b").shape[0];
  p.h = ckpt.config.hidden;
  return p;
}

namespace detail {

// Dedicated RNG substreams so each source of randomness can be reproduced in
// isolation; the holdout split draws from the root sequence itself.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kGumbelStream = 3;

// Greedy-mode behavior-cloning loss on an already downsampled and normalized
// dataset. Accumulation mirrors the graph's weighted sums term by term so the
// result equals the bc component of compute_loss with zero Gumbel noise.
inline double bc_on_normalized(const model::PodnetParams& p, const data::Dataset& normalized) {
  if (normalized.trajectories.empty()) throw std::invalid_argument("evaluate_bc_loss: empty dataset");
  SplitRng rng(0);  // greedy inference draws nothing
  const double inv_b = 1.0 / static_cast<double>(normalized.trajectories.size());
  double total = 0.0;
  for (const auto& traj : normalized.trajectories) {
    const model::OptionAssignment assign =
        model::infer_options(p, traj.states, 1.0, rng, model::InferMode::kGreedy);
    const std::size_t t_count = traj.states.size() - 1;
    const double inv_t = 1.0 / static_cast<double>(t_count);
    double traj_bc = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
      const std::vector<double> action = model::policy_action(p, traj.states[t], assign.labels[t]);
      double err = 0.0;
      for (std::size_t i = 0; i < action.size(); ++i) {
        const double diff = action[i] - traj.actions[t][i];
        err += diff * diff;
      }
      traj_bc += inv_t * err;
    }
    total += inv_b * traj_bc;
  }
  return total;
}

}  // namespace detail

inline std::pair<Checkpoint, TrainHistory> train(const data::Dataset& dataset, const TrainConfig& config) {
  validate(config);
  if (dataset.trajectories.empty()) throw std::invalid_argument("train: empty dataset");

  const data::Dataset down = data::downsample(dataset, config.stride);
  for (const auto& traj : down.trajectories)
    if (traj.states.size() <= config.horizon)
      throw std::invalid_argument("train: trajectory '" + traj.id + "' has " +
                                  std::to_string(traj.states.size()) +
                                  " downsampled states, needs more than horizon " +
                                  std::to_string(config.horizon));
  const auto [normed, norm] = data::normalize(down);
  const auto [train_set, holdout] = data::split(normed, config.holdout_fraction, config.seed);

  SplitRng root(config.seed);
  SplitRng init_rng = root.split(detail::kInitStream);
  model::PodnetParams p =
      model::init_podnet(config.k, down.d, down.m, config.hidden, config.mlp_width, init_rng);
  p.norm = norm;

  const std::size_t n = train_set.trajectories.size();
  const std::size_t batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * batches_per_epoch;
  latent::TemperatureSchedule schedule{
      config.tau0, config.tau_min,
      std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(config.tau_decay_fraction *
                                                   static_cast<double>(total_steps))))};

  nn::AdamState adam = nn::AdamState::init(p.params);
  SplitRng shuffle_rng = root.split(detail::kShuffleStream);
  SplitRng noise_root = root.split(detail::kGumbelStream);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  history.epochs.reserve(config.epochs);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double tau = config.tau0;
    double sum_total = 0.0, sum_odc = 0.0, sum_bc = 0.0, sum_kl = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += config.batch_size) {
      std::vector<const data::Trajectory*> batch;
      const std::size_t b1 = std::min(n, b0 + config.batch_size);
      batch.reserve(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) batch.push_back(&train_set.trajectories[order[i]]);

      tau = latent::temperature(step, schedule);
      model::LossHyper hyper;
      hyper.beta = config.beta;
      hyper.tau = tau;
      hyper.horizon = config.horizon;
      hyper.kl_mode = config.kl_mode;
      hyper.kl_sign = config.kl_sign;

      const model::NoiseTable noise = model::draw_noise(batch, p.k, noise_root.split(step));
      nn::ParamStore grads;
      const model::LossBreakdown loss = model::loss_and_gradients(p, batch, hyper, noise, grads);
      nn::adam_step(p.params, grads, adam, config.lr);

      sum_total += loss.total;
      sum_odc += loss.odc;
      sum_bc += loss.bc;
      sum_kl += loss.kl;
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double inv = 1.0 / static_cast<double>(batches_per_epoch);
    rec.total = sum_total * inv;
    rec.odc = sum_odc * inv;
    rec.bc = sum_bc * inv;
    rec.kl = sum_kl * inv;
    rec.heldout_bc = holdout.trajectories.empty() ? 0.0 : detail::bc_on_normalized(p, holdout);
    rec.tau = tau;
    history.epochs.push_back(rec);
  }

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.norm = norm;
  ckpt.params = std::move(p.params);
  ckpt.final_epoch = history.epochs.back();
  return {std::move(ckpt), std::move(history)};
}

// Greedy-mode held-out behavior-cloning loss; preprocessing matches training
// (the checkpoint's stride and normalization statistics).
inline double evaluate_bc_loss(const Checkpoint& ckpt, const data::Dataset& heldout) {
  if (heldout.trajectories.empty()) throw std::invalid_argument("evaluate_bc_loss: empty dataset");
  const model::PodnetParams p = model_from_checkpoint(ckpt);
  const data::Dataset ds =
      data::apply_normalization(data::downsample(heldout, ckpt.config.stride), ckpt.norm);
  return detail::bc_on_normalized(p, ds);
}

struct DiscoveryRow {
  std::size_t k = 0;
  double heldout_bc = 0.0;
};

struct DiscoveryResult {
  std::size_t k_best = 0;
  std::vector<DiscoveryRow> table;  // one row per trained candidate, in evaluation order
};

// Hill climb over the option count, starting at config.k: probe the smaller
// neighbor, then the larger, and walk in the first direction that improves
// the held-out BC loss by more than 1% relative. Every candidate trains from
// scratch with the same seed; the best K is the minimum over all rows.
inline DiscoveryResult discover_num_options(const data::Dataset& dataset, const TrainConfig& config,
                                            std::size_t k_min, std::size_t k_max) {
  if (k_min < 2 || k_min > config.k || config.k > k_max)
    throw std::invalid_argument("discover_num_options: need 2 <= k_min <= config.k <= k_max");

  std::map<std::size_t, double> scores;
  DiscoveryResult result;
  auto score = [&](std::size_t k) {
    const auto it = scores.find(k);
    if (it != scores.end()) return it->second;
    TrainConfig candidate = config;
    candidate.k = k;
    const auto [ckpt, hist] = train(dataset, candidate);
    const double bc = hist.epochs.back().heldout_bc;
    scores.emplace(k, bc);
    result.table.push_back({k, bc});
    return bc;
  };
  auto improves = [](double next, double prev) { return next < prev * 0.99; };

  const double base = score(config.k);
  int dir = 0;
  if (config.k > k_min && improves(score(config.k - 1), base))
    dir = -1;
  else if (config.k < k_max && improves(score(config.k + 1), base))
    dir = 1;

  std::size_t prev = static_cast<std::size_t>(static_cast<std::int64_t>(config.k) + dir);
  while (dir != 0) {
    const std::int64_t next = static_cast<std::int64_t>(prev) + dir;
    if (next < static_cast<std::int64_t>(k_min) || next > static_cast<std::int64_t>(k_max)) break;
    if (!improves(score(static_cast<std::size_t>(next)), scores.at(prev))) break;
    prev = static_cast<std::size_t>(next);
  }

  result.k_best = result.table.front().k;
  double best = result.table.front().heldout_bc;
  for (const DiscoveryRow& row : result.table) {
    if (row.heldout_bc < best || (row.heldout_bc == best && row.k < result.k_best)) {
      best = row.heldout_bc;
      result.k_best = row.k;
    }
  }
  return result;
}

inline std::string history_to_csv(const TrainHistory& history) {
  std::string out = "epoch,total,odc,bc,kl,heldout_bc,tau\n";
  char tmp[40];
  for (const EpochRecord& r : history.epochs) {
    out += std::to_string(r.epoch);
    for (const double v : {r.total, r.odc, r.bc, r.kl, r.heldout_bc, r.tau}) {
      std::snprintf(tmp, sizeof tmp, "%.17g", v);
      out += ',';
      out += tmp;
    }
    out += '\n';
  }
  return out;
}

inline void save_history(const TrainHistory& history, const std::string& path) {
  jsonio::write_file(path, history_to_csv(history));
}

inline const char* kl_mode_name(model::KlMode mode) {
  return mode == model::KlMode::kPerStep ? "per_step" : "marginal";
}

inline model::KlMode kl_mode_from_name(const std::string& name, const std::string& context) {
  if (name == "per_step") return model::KlMode::kPerStep;
  if (name == "marginal") return model::KlMode::kMarginal;
  throw std::runtime_error(context + ": unknown kl_mode '" + name + "'");
}

inline void write_train_config(jsonio::Writer& w, const TrainConfig& c) {
  w.begin_object();
  w.key("k");
  w.unsigned_integer(c.k);
  w.key("beta");
  w.number(c.beta);
  w.key("lr");
  w.number(c.lr);
  w.key("epochs");
  w.unsigned_integer(c.epochs);
  w.key("batch_size");
  w.unsigned_integer(c.batch_size);
  w.key("stride");
  w.unsigned_integer(c.stride);
  w.key("horizon");
  w.unsigned_integer(c.horizon);
  w.key("tau0");
  w.number(c.tau0);
  w.key("tau_min");
  w.number(c.tau_min);
  w.key("tau_decay_fraction");
  w.number(c.tau_decay_fraction);
  w.key("holdout_fraction");
  w.number(c.holdout_fraction);
  w.key("seed");
  w.unsigned_integer(c.seed);
  w.key("kl_mode");
  w.string(kl_mode_name(c.kl_mode));
  w.key("kl_sign");
  w.number(c.kl_sign);
  w.key("hidden");
  w.unsigned_integer(c.hidden);
  w.key("mlp_width");
  w.unsigned_integer(c.mlp_width);
  w.end_object();
}

inline std::string checkpoint_to_json(const Checkpoint& ckpt) {
  jsonio::Writer w;
  w.begin_object();
  w.key("version");
  w.integer(ckpt.version);
  w.key("config");
  write_train_config(w, ckpt.config);
  w.key("norm");
  w.begin_object();
  w.key("mean");
  w.number_array(ckpt.norm.mean);
  w.key("std");
  w.number_array(ckpt.norm.std_dev);
  w.end_object();
  w.key("params");
  w.begin_object();
  for (const auto& [name, tensor] : ckpt.params) {
    w.key(name);
    w.begin_object();
    w.key("shape");
    w.begin_array();
    for (const std::size_t s : tensor.shape) w.unsigned_integer(s);
    w.end_array();
    w.key("data");
    w.number_array(tensor.data);
    w.end_object();
  }
  w.end_object();
  w.end_object();
  return w.take();
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  jsonio::write_file(path, checkpoint_to_json(ckpt));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string ctx = "load_checkpoint: " + path;
  const nlohmann::json j = nlohmann::json::parse(jsonio::read_file(path));
  if (!j.is_object()) throw std::runtime_error(ctx + ": top level is not an object");
  jsonio::reject_unknown_keys(j, {"version", "config", "norm", "params"}, ctx);

  const auto& jver = jsonio::require(j, "version", ctx);
  if (!jver.is_number_integer() || jver.get<std::int64_t>() != kCheckpointVersion)
    throw std::runtime_error(ctx + ": version " + jver.dump() + ", expected " +
                             std::to_string(kCheckpointVersion));

  Checkpoint ckpt;
  const auto& jc = jsonio::require(j, "config", ctx);
  const std::string cctx = ctx + ": config";
  jsonio::reject_unknown_keys(jc,
                              {"k", "beta", "lr", "epochs", "batch_size", "stride", "horizon", "tau0",
                               "tau_min", "tau_decay_fraction", "holdout_fraction", "seed", "kl_mode",
                               "kl_sign", "hidden", "mlp_width"},
                              cctx);
  auto read_count = [&](const char* key) -> std::size_t {
    const auto& v = jsonio::require(jc, key, cctx);
    if (!v.is_number_integer() && !v.is_number_unsigned())
      throw std::runtime_error(cctx + ": field '" + std::string(key) + "' is not an integer");
    const std::int64_t x = v.get<std::int64_t>();
    if (x < 0) throw std::runtime_error(cctx + ": field '" + std::string(key) + "' is negative");
    return static_cast<std::size_t>(x);
  };
  auto read_real = [&](const char* key) -> double {
    const auto& v = jsonio::require(jc, key, cctx);
    if (!v.is_number()) throw std::runtime_error(cctx + ": field '" + std::string(key) + "' is not a number");
    return v.get<double>();
  };
  ckpt.config.k = read_count("k");
  ckpt.config.beta = read_real("beta");
  ckpt.config.lr = read_real("lr");
  ckpt.config.epochs = read_count("epochs");
  ckpt.config.batch_size = read_count("batch_size");
  ckpt.config.stride = read_count("stride");
  ckpt.config.horizon = read_count("horizon");
  ckpt.config.tau0 = read_real("tau0");
  ckpt.config.tau_min = read_real("tau_min");
  ckpt.config.tau_decay_fraction = read_real("tau_decay_fraction");
  ckpt.config.holdout_fraction = read_real("holdout_fraction");
  const auto& jseed = jsonio::require(jc, "seed", cctx);
  if (!jseed.is_number_unsigned() && !jseed.is_number_integer())
    throw std::runtime_error(cctx + ": field 'seed' is not an integer");
  if (jseed.is_number_integer() && !jseed.is_number_unsigned() && jseed.get<std::int64_t>() < 0)
    throw std::runtime_error(cctx + ": field 'seed' is negative");
  ckpt.config.seed = jseed.get<std::uint64_t>();
  const auto& jmode = jsonio::require(jc, "kl_mode", cctx);
  if (!jmode.is_string()) throw std::runtime_error(cctx + ": field 'kl_mode' is not a string");
  ckpt.config.kl_mode = kl_mode_from_name(jmode.get<std::string>(), cctx);
  ckpt.config.kl_sign = read_real("kl_sign");
  ckpt.config.hidden = read_count("hidden");
  ckpt.config.mlp_width = read_count("mlp_width");
  validate(ckpt.config);

  const auto& jn = jsonio::require(j, "norm", ctx);
  const std::string nctx = ctx + ": norm";
  jsonio::reject_unknown_keys(jn, {"mean", "std"}, nctx);
  ckpt.norm.mean = jsonio::to_vector(jsonio::require(jn, "mean", nctx), nctx + ": mean");
  ckpt.norm.std_dev = jsonio::to_vector(jsonio::require(jn, "std", nctx), nctx + ": std");
  if (ckpt.norm.mean.empty() || ckpt.norm.mean.size() != ckpt.norm.std_dev.size())
    throw std::runtime_error(nctx + ": mean and std must be non-empty and equal length");
  for (const double s : ckpt.norm.std_dev)
    if (!(s > 0.0)) throw std::runtime_error(nctx + ": std entries must be positive");

  const auto& jp = jsonio::require(j, "params", ctx);
  if (!jp.is_object()) throw std::runtime_error(ctx + ": params is not an object");
  for (const auto& [name, jt] : jp.items()) {
    const std::string tctx = ctx + ": tensor '" + name + "'";
    jsonio::reject_unknown_keys(jt, {"shape", "data"}, tctx);
    nn::Tensor tensor;
    const auto& jshape = jsonio::require(jt, "shape", tctx);
    if (!jshape.is_array()) throw std::runtime_error(tctx + ": shape is not an array");
    std::size_t product = 1;
    for (const auto& s : jshape) {
      if (!s.is_number_integer() && !s.is_number_unsigned())
        throw std::runtime_error(tctx + ": shape entries must be integers");
      const std::int64_t v = s.get<std::int64_t>();
      if (v < 1) throw std::runtime_error(tctx + ": shape entries must be positive");
      tensor.shape.push_back(static_cast<std::size_t>(v));
      product *= static_cast<std::size_t>(v);
    }
    tensor.data = jsonio::to_vector(jsonio::require(jt, "data", tctx), tctx + ": data");
    if (tensor.data.size() != product)
      throw std::runtime_error(tctx + ": data length " + std::to_string(tensor.data.size()) +
                               " does not match shape product " + std::to_string(product));
    ckpt.params.add(name, std::move(tensor));
  }

  // Rebuilding the expected layout catches missing tensors, stray extras,
  // and shape disagreements in one pass.
  const std::size_t d = ckpt.norm.mean.size();
  if (!ckpt.params.contains("policy.l0.W")) throw std::runtime_error(ctx + ": missing tensor 'policy.l0.W'");
  const std::size_t layers = nn::mlp_layer_count(ckpt.params, "policy");
  const std::string out_bias = "policy.l" + std::to_string(layers - 1) + ".b";
  if (!ckpt.params.contains(out_bias)) throw std::runtime_error(ctx + ": missing tensor '" + out_bias + "'");
  const std::size_t m = ckpt.params.at(out_bias).shape[0];
  SplitRng layout_rng(0);
  const model::PodnetParams expected =
      model::init_podnet(ckpt.config.k, d, m, ckpt.config.hidden, ckpt.config.mlp_width, layout_rng);
  expected.params.require_same_layout(ckpt.params, "load_checkpoint");
  return ckpt;
}

}  // namespace podnet::training
