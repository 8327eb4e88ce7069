#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "podnet/jsonio.hpp"
#include "podnet/rng.hpp"

namespace podnet::data {

// One demonstration: states s_0..s_T, actions a_0..a_{T-1}, and (for the
// synthetic environments) the ground-truth option label active at each step.
struct Trajectory {
  std::string id;
  std::string env_name;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> actions;
  std::vector<int> true_labels;  // empty when unavailable

  std::size_t step_count() const { return actions.size(); }

  void validate() const {
    if (states.size() != actions.size() + 1)
      throw std::runtime_error("Trajectory::validate: '" + id + "' has " + std::to_string(states.size()) +
                               " states for " + std::to_string(actions.size()) + " actions");
    if (states.empty()) throw std::runtime_error("Trajectory::validate: '" + id + "' is empty");
    const std::size_t d = states.front().size();
    for (const auto& s : states)
      if (s.size() != d) throw std::runtime_error("Trajectory::validate: '" + id + "' has ragged state dimensions");
    if (!actions.empty()) {
      const std::size_t m = actions.front().size();
      for (const auto& a : actions)
        if (a.size() != m) throw std::runtime_error("Trajectory::validate: '" + id + "' has ragged action dimensions");
    }
    if (!true_labels.empty() && true_labels.size() != actions.size())
      throw std::runtime_error("Trajectory::validate: '" + id + "' label count does not match action count");
  }
};

struct Dataset {
  std::string env_name;
  std::size_t d = 0;
  std::size_t m = 0;
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }

  void validate() const {
    if (trajectories.empty()) throw std::runtime_error("Dataset::validate: no trajectories");
    for (const auto& t : trajectories) {
      t.validate();
      if (t.env_name != env_name)
        throw std::runtime_error("Dataset::validate: trajectory '" + t.id + "' belongs to env '" + t.env_name +
                                 "', dataset is '" + env_name + "'");
      if (t.states.front().size() != d)
        throw std::runtime_error("Dataset::validate: trajectory '" + t.id + "' has state dimension " +
                                 std::to_string(t.states.front().size()) + ", expected " + std::to_string(d));
      if (!t.actions.empty() && t.actions.front().size() != m)
        throw std::runtime_error("Dataset::validate: trajectory '" + t.id + "' has action dimension " +
                                 std::to_string(t.actions.front().size()) + ", expected " + std::to_string(m));
    }
  }
};

// Pooled per-dimension statistics of the raw states. Actions are divided by
// the same std so the behavior-cloning MSE stays scale-consistent with the
// dynamics MSE.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std_dev;  // componentwise, floored at 1e-8
};

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;
};

struct EnvSpec {
  std::string name;  // "waypoint2d" or "primitive1d"
  int k_true = 0;
  double max_speed = 0.0;
  double noise_std = 0.0;
  double arrival_radius = 0.0;
  Box bounds;
  std::vector<std::vector<double>> waypoints;  // waypoint2d only, fixed per env instance
  std::vector<double> velocities;              // primitive1d only

  std::size_t state_dim() const { return bounds.lo.size(); }
  std::size_t action_dim() const { return bounds.lo.size(); }

  // 2-D point-mass world. A demonstrator steers toward a random sequence of
  // waypoints; the waypoint ring is built here, once, and kept in the spec so
  // ground truth is reproducible.
  static EnvSpec waypoint2d(int k_true, std::uint64_t seed) {
    if (k_true < 2) throw std::invalid_argument("EnvSpec::waypoint2d: k_true must be >= 2");
    EnvSpec spec;
    spec.name = "waypoint2d";
    spec.k_true = k_true;
    spec.max_speed = 0.12;
    spec.noise_std = 0.02;
    // Slightly inside the executor's default arrival threshold, so closed-loop
    // goal reaching stays within demonstrated territory.
    spec.arrival_radius = 0.95;
    spec.bounds = Box{{0.0, 0.0}, {10.0, 10.0}};
    // Waypoints sit on a ring around the arena center at a seeded rotation:
    // every seed gets the same well-separated geometry, so sub-behaviors stay
    // equally identifiable across seeds instead of depending on placement luck.
    SplitRng rng(seed);
    const double theta0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int j = 0; j < k_true; ++j) {
      const double theta = theta0 + 2.0 * std::numbers::pi * j / k_true;
      spec.waypoints.push_back({5.0 + 3.8 * std::cos(theta), 5.0 + 3.8 * std::sin(theta)});
    }
    return spec;
  }

  // 1-D constant-velocity primitives. The option set is fixed, so no seed.
  static EnvSpec primitive1d() {
    EnvSpec spec;
    spec.name = "primitive1d";
    spec.velocities = {-0.3, 0.0, 0.3};
    spec.k_true = static_cast<int>(spec.velocities.size());
    spec.max_speed = 1.0;
    spec.noise_std = 0.02;
    spec.arrival_radius = 0.1;
    spec.bounds = Box{{-1e6}, {1e6}};
    return spec;
  }
};

inline std::vector<double> env_step(const EnvSpec& spec, const std::vector<double>& state,
                                    const std::vector<double>& action) {
  if (state.size() != spec.state_dim() || action.size() != spec.action_dim())
    throw std::invalid_argument("env_step: dimension mismatch for env '" + spec.name + "'");
  std::vector<double> next(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double a = std::clamp(action[i], -spec.max_speed, spec.max_speed);
    next[i] = std::clamp(state[i] + a, spec.bounds.lo[i], spec.bounds.hi[i]);
  }
  return next;
}

namespace detail {

// Demonstrator noise, clamped so every generated action stays within four
// standard deviations of the commanded value. Always consumes one draw.
inline double clamped_noise(SplitRng& rng, double std_dev) {
  if (std_dev <= 0.0) {
    (void)rng.normal();
    return 0.0;
  }
  return std::clamp(rng.normal(0.0, std_dev), -4.0 * std_dev, 4.0 * std_dev);
}

inline Trajectory generate_waypoint2d(const EnvSpec& spec, std::size_t index, std::uint64_t seed) {
  SplitRng rng(seed ^ static_cast<std::uint64_t>(index));
  const int n_visits = rng.uniform_int(3, 5);
  std::vector<int> visits(static_cast<std::size_t>(n_visits));
  visits[0] = rng.uniform_int(0, spec.k_true - 1);
  for (std::size_t v = 1; v < visits.size(); ++v) {
    int w = rng.uniform_int(0, spec.k_true - 1);
    while (w == visits[v - 1]) w = rng.uniform_int(0, spec.k_true - 1);
    visits[v] = w;
  }

  const auto& first = spec.waypoints[static_cast<std::size_t>(visits[0])];
  std::vector<double> state;
  for (;;) {
    state = {rng.uniform(spec.bounds.lo[0], spec.bounds.hi[0]), rng.uniform(spec.bounds.lo[1], spec.bounds.hi[1])};
    const double dx = state[0] - first[0];
    const double dy = state[1] - first[1];
    if (std::sqrt(dx * dx + dy * dy) >= 2.0) break;
  }

  Trajectory traj;
  char id[64];
  std::snprintf(id, sizeof id, "%s-%04zu", spec.name.c_str(), index);
  traj.id = id;
  traj.env_name = spec.name;
  traj.states.push_back(state);

  constexpr std::size_t kMaxSteps = 4000;
  for (int target : visits) {
    const auto& wp = spec.waypoints[static_cast<std::size_t>(target)];
    for (;;) {
      const double dx = wp[0] - state[0];
      const double dy = wp[1] - state[1];
      const double dist = std::sqrt(dx * dx + dy * dy);
      if (dist <= spec.arrival_radius) break;
      // Cruise at constant speed along the bearing; the commanded action then
      // varies little within a leg, keeping each waypoint's sub-behavior compact.
      const double scale = std::min(spec.max_speed, dist) / dist;
      std::vector<double> action{scale * dx + clamped_noise(rng, spec.noise_std),
                                 scale * dy + clamped_noise(rng, spec.noise_std)};
      state = env_step(spec, state, action);
      traj.actions.push_back(std::move(action));
      traj.true_labels.push_back(target);
      traj.states.push_back(state);
      if (traj.actions.size() >= kMaxSteps) return traj;
    }
  }
  return traj;
}

inline Trajectory generate_primitive1d(const EnvSpec& spec, std::size_t index, std::uint64_t seed) {
  SplitRng rng(seed ^ static_cast<std::uint64_t>(index));
  const int n_segments = rng.uniform_int(3, 5);
  const int k = static_cast<int>(spec.velocities.size());

  Trajectory traj;
  char id[64];
  std::snprintf(id, sizeof id, "%s-%04zu", spec.name.c_str(), index);
  traj.id = id;
  traj.env_name = spec.name;

  std::vector<double> state{rng.uniform(-1.0, 1.0)};
  traj.states.push_back(state);

  int prev = -1;
  for (int seg = 0; seg < n_segments; ++seg) {
    int option = rng.uniform_int(0, k - 1);
    while (option == prev) option = rng.uniform_int(0, k - 1);
    prev = option;
    const int duration = rng.uniform_int(20, 40);
    for (int step = 0; step < duration; ++step) {
      std::vector<double> action{spec.velocities[static_cast<std::size_t>(option)] +
                                 clamped_noise(rng, spec.noise_std)};
      state = env_step(spec, state, action);
      traj.actions.push_back(std::move(action));
      traj.true_labels.push_back(option);
      traj.states.push_back(state);
    }
  }
  return traj;
}

}  // namespace detail

// Deterministic under (spec, n_traj, seed); trajectory i draws from sub-seed
// seed XOR i, so trajectories are independent of each other and of n_traj.
inline Dataset generate_dataset(const EnvSpec& spec, std::size_t n_traj, std::uint64_t seed) {
  if (n_traj < 1) throw std::invalid_argument("generate_dataset: n_traj must be >= 1");
  Dataset out;
  out.env_name = spec.name;
  out.d = spec.state_dim();
  out.m = spec.action_dim();
  out.trajectories.reserve(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    if (spec.name == "waypoint2d")
      out.trajectories.push_back(detail::generate_waypoint2d(spec, i, seed));
    else if (spec.name == "primitive1d")
      out.trajectories.push_back(detail::generate_primitive1d(spec, i, seed));
    else
      throw std::invalid_argument("generate_dataset: unknown env '" + spec.name + "'");
  }
  out.validate();
  return out;
}

// Keeps states at indices 0, stride, 2*stride, ...; the action (and label)
// kept at a retained state is the raw one in force at that index.
inline Trajectory downsample(const Trajectory& traj, std::size_t stride) {
  if (stride < 1) throw std::invalid_argument("downsample: stride must be >= 1");
  traj.validate();
  Trajectory out;
  out.id = traj.id;
  out.env_name = traj.env_name;
  for (std::size_t i = 0; i < traj.states.size(); i += stride) out.states.push_back(traj.states[i]);
  if (out.states.size() < 2)
    throw std::invalid_argument("downsample: trajectory '" + traj.id + "' retains fewer than 2 states at stride " +
                                std::to_string(stride));
  for (std::size_t j = 0; j + 1 < out.states.size(); ++j) {
    out.actions.push_back(traj.actions[j * stride]);
    if (!traj.true_labels.empty()) out.true_labels.push_back(traj.true_labels[j * stride]);
  }
  return out;
}

inline Dataset downsample(const Dataset& dataset, std::size_t stride) {
  Dataset out;
  out.env_name = dataset.env_name;
  out.d = dataset.d;
  out.m = dataset.m;
  out.trajectories.reserve(dataset.trajectories.size());
  for (const auto& t : dataset.trajectories) out.trajectories.push_back(downsample(t, stride));
  return out;
}

inline std::vector<double> normalize_state(const std::vector<double>& state, const NormStats& stats) {
  if (state.size() != stats.mean.size()) throw std::invalid_argument("normalize_state: dimension mismatch");
  std::vector<double> out(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) out[i] = (state[i] - stats.mean[i]) / stats.std_dev[i];
  return out;
}

inline std::vector<double> denormalize_state(const std::vector<double>& state, const NormStats& stats) {
  if (state.size() != stats.mean.size()) throw std::invalid_argument("denormalize_state: dimension mismatch");
  std::vector<double> out(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) out[i] = state[i] * stats.std_dev[i] + stats.mean[i];
  return out;
}

namespace detail {

// Action scale per component: the matching state std when m == d, otherwise
// the mean std (no synthetic env needs the fallback, but stay total).
inline double action_scale(const NormStats& stats, std::size_t m, std::size_t i) {
  if (m == stats.std_dev.size()) return stats.std_dev[i];
  double sum = std::accumulate(stats.std_dev.begin(), stats.std_dev.end(), 0.0);
  return sum / static_cast<double>(stats.std_dev.size());
}

}  // namespace detail

inline std::vector<double> normalize_action(const std::vector<double>& action, const NormStats& stats) {
  std::vector<double> out(action.size());
  for (std::size_t i = 0; i < action.size(); ++i) out[i] = action[i] / detail::action_scale(stats, action.size(), i);
  return out;
}

inline std::vector<double> denormalize_action(const std::vector<double>& action, const NormStats& stats) {
  std::vector<double> out(action.size());
  for (std::size_t i = 0; i < action.size(); ++i) out[i] = action[i] * detail::action_scale(stats, action.size(), i);
  return out;
}

inline Dataset apply_normalization(const Dataset& dataset, const NormStats& stats) {
  Dataset out = dataset;
  for (auto& traj : out.trajectories) {
    for (auto& s : traj.states) s = normalize_state(s, stats);
    for (auto& a : traj.actions) a = normalize_action(a, stats);
  }
  return out;
}

// Pooled two-pass z-score over every state in the dataset.
inline std::pair<Dataset, NormStats> normalize(const Dataset& dataset) {
  dataset.validate();
  NormStats stats;
  stats.mean.assign(dataset.d, 0.0);
  stats.std_dev.assign(dataset.d, 0.0);
  std::size_t count = 0;
  for (const auto& traj : dataset.trajectories)
    for (const auto& s : traj.states) {
      for (std::size_t i = 0; i < dataset.d; ++i) stats.mean[i] += s[i];
      ++count;
    }
  for (std::size_t i = 0; i < dataset.d; ++i) stats.mean[i] /= static_cast<double>(count);
  for (const auto& traj : dataset.trajectories)
    for (const auto& s : traj.states)
      for (std::size_t i = 0; i < dataset.d; ++i) {
        const double c = s[i] - stats.mean[i];
        stats.std_dev[i] += c * c;
      }
  for (std::size_t i = 0; i < dataset.d; ++i)
    stats.std_dev[i] = std::max(std::sqrt(stats.std_dev[i] / static_cast<double>(count)), 1e-8);
  return {apply_normalization(dataset, stats), stats};
}

// Trajectory-level split; both sides preserve the original ordering.
inline std::pair<Dataset, Dataset> split(const Dataset& dataset, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw std::invalid_argument("split: holdout_fraction must lie in (0, 1)");
  const std::size_t n = dataset.trajectories.size();
  const std::size_t n_holdout = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(n)));
  if (n_holdout == 0 || n_holdout == n)
    throw std::invalid_argument("split: holdout_fraction " + std::to_string(holdout_fraction) + " leaves a side of " +
                                std::to_string(n) + " trajectories empty");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitRng rng(seed);
  rng.shuffle(order);
  std::vector<bool> held(n, false);
  for (std::size_t i = 0; i < n_holdout; ++i) held[order[i]] = true;

  Dataset train, holdout;
  train.env_name = holdout.env_name = dataset.env_name;
  train.d = holdout.d = dataset.d;
  train.m = holdout.m = dataset.m;
  for (std::size_t i = 0; i < n; ++i)
    (held[i] ? holdout : train).trajectories.push_back(dataset.trajectories[i]);
  return {std::move(train), std::move(holdout)};
}

// --- file formats ---
// Dataset: JSONL, one trajectory object per line. EnvSpec: a single JSON
// object, written alongside the dataset.

inline std::string trajectory_to_json(const Trajectory& traj) {
  jsonio::Writer w;
  w.begin_object();
  w.key("id");
  w.string(traj.id);
  w.key("env");
  w.string(traj.env_name);
  w.key("states");
  w.begin_array();
  for (const auto& s : traj.states) w.number_array(s);
  w.end_array();
  w.key("actions");
  w.begin_array();
  for (const auto& a : traj.actions) w.number_array(a);
  w.end_array();
  if (!traj.true_labels.empty()) {
    w.key("labels");
    w.begin_array();
    for (int v : traj.true_labels) w.integer(v);
    w.end_array();
  }
  w.end_object();
  return w.take();
}

inline void save_dataset(const Dataset& dataset, const std::string& path) {
  dataset.validate();
  std::string out;
  for (const auto& traj : dataset.trajectories) {
    out += trajectory_to_json(traj);
    out += '\n';
  }
  jsonio::write_file(path, out);
}

inline Dataset load_dataset(const std::string& path) {
  std::istringstream in(jsonio::read_file(path));
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string context = "load_dataset: " + path + ": line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(context + ": malformed JSON (" + std::string(e.what()) + ")");
    }
    Trajectory traj;
    traj.id = jsonio::require(j, "id", context).get<std::string>();
    traj.env_name = jsonio::require(j, "env", context).get<std::string>();
    traj.states = jsonio::to_matrix(jsonio::require(j, "states", context), context + ": states");
    traj.actions = jsonio::to_matrix(jsonio::require(j, "actions", context), context + ": actions");
    if (j.contains("labels")) {
      for (const auto& v : j.at("labels")) traj.true_labels.push_back(v.get<int>());
    }
    try {
      traj.validate();
    } catch (const std::exception& e) {
      throw std::runtime_error(context + ": " + e.what());
    }
    if (out.trajectories.empty()) {
      out.env_name = traj.env_name;
      out.d = traj.states.front().size();
      out.m = traj.actions.empty() ? 0 : traj.actions.front().size();
    }
    out.trajectories.push_back(std::move(traj));
  }
  if (out.trajectories.empty()) throw std::runtime_error("load_dataset: " + path + ": no trajectories");
  out.validate();
  return out;
}

inline std::string env_spec_to_json(const EnvSpec& spec) {
  jsonio::Writer w;
  w.begin_object();
  w.key("name");
  w.string(spec.name);
  w.key("k_true");
  w.integer(spec.k_true);
  w.key("max_speed");
  w.number(spec.max_speed);
  w.key("noise_std");
  w.number(spec.noise_std);
  w.key("arrival_radius");
  w.number(spec.arrival_radius);
  w.key("bounds");
  w.begin_object();
  w.key("lo");
  w.number_array(spec.bounds.lo);
  w.key("hi");
  w.number_array(spec.bounds.hi);
  w.end_object();
  if (!spec.waypoints.empty()) {
    w.key("waypoints");
    w.begin_array();
    for (const auto& p : spec.waypoints) w.number_array(p);
    w.end_array();
  }
  if (!spec.velocities.empty()) {
    w.key("velocities");
    w.number_array(spec.velocities);
  }
  w.end_object();
  return w.take();
}

inline void save_env_spec(const EnvSpec& spec, const std::string& path) {
  jsonio::write_file(path, env_spec_to_json(spec) + "\n");
}

inline EnvSpec env_spec_from_json(const nlohmann::json& j, const std::string& context) {
  jsonio::reject_unknown_keys(
      j, {"name", "k_true", "max_speed", "noise_std", "arrival_radius", "bounds", "waypoints", "velocities"}, context);
  EnvSpec spec;
  spec.name = jsonio::require(j, "name", context).get<std::string>();
  if (spec.name != "waypoint2d" && spec.name != "primitive1d")
    throw std::runtime_error(context + ": unknown env '" + spec.name + "'");
  spec.k_true = jsonio::require(j, "k_true", context).get<int>();
  spec.max_speed = jsonio::require(j, "max_speed", context).get<double>();
  spec.noise_std = jsonio::require(j, "noise_std", context).get<double>();
  spec.arrival_radius = jsonio::require(j, "arrival_radius", context).get<double>();
  const auto& b = jsonio::require(j, "bounds", context);
  spec.bounds.lo = jsonio::to_vector(jsonio::require(b, "lo", context), context + ": bounds.lo");
  spec.bounds.hi = jsonio::to_vector(jsonio::require(b, "hi", context), context + ": bounds.hi");
  if (j.contains("waypoints")) spec.waypoints = jsonio::to_matrix(j.at("waypoints"), context + ": waypoints");
  if (j.contains("velocities")) spec.velocities = jsonio::to_vector(j.at("velocities"), context + ": velocities");
  if (spec.name == "waypoint2d" && static_cast<int>(spec.waypoints.size()) != spec.k_true)
    throw std::runtime_error(context + ": waypoint2d spec needs exactly k_true waypoints");
  if (spec.name == "primitive1d" && static_cast<int>(spec.velocities.size()) != spec.k_true)
    throw std::runtime_error(context + ": primitive1d spec needs exactly k_true velocities");
  return spec;
}

inline EnvSpec load_env_spec(const std::string& path) {
  const std::string context = "load_env_spec: " + path;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(jsonio::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(context + ": malformed JSON (" + std::string(e.what()) + ")");
  }
  return env_spec_from_json(j, context);
}

}  // namespace podnet::data
