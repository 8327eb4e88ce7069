#pragma once

// Meta-controller on top of a trained checkpoint: beam search over option
// sequences scored through the learned dynamics model, and a closed-loop
// executor that realizes the planned options with the option-conditioned
// policy in the real environment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "podnet/data.hpp"
#include "podnet/jsonio.hpp"
#include "podnet/latent.hpp"
#include "podnet/model.hpp"
#include "podnet/training.hpp"

namespace podnet::planner {

struct PlannerConfig {
  std::size_t beam_width = 8;
  std::size_t max_depth = 12;
  std::size_t option_duration = 5;  // downsampled dynamics steps per planned option
  double goal_eps = 0.4;            // arrival threshold, normalized-state distance
  std::size_t max_exec_steps = 2000;  // raw env steps before the executor gives up
};

inline void validate(const PlannerConfig& c) {
  if (c.beam_width < 1) throw std::invalid_argument("PlannerConfig: need beam_width >= 1");
  if (c.max_depth < 1) throw std::invalid_argument("PlannerConfig: need max_depth >= 1");
  if (c.option_duration < 1) throw std::invalid_argument("PlannerConfig: need option_duration >= 1");
  if (!(c.goal_eps > 0.0)) throw std::invalid_argument("PlannerConfig: need goal_eps > 0");
  if (c.max_exec_steps < 1) throw std::invalid_argument("PlannerConfig: need max_exec_steps >= 1");
}

struct Plan {
  std::vector<int> options;
  // Normalized model-space rollout, option_duration states per planned option
  // plus the start state.
  std::vector<std::vector<double>> predicted_states;
  bool feasible = false;
  double terminal_distance = 0.0;
};

struct ExecutionTrace {
  std::vector<std::vector<double>> states;   // raw env states, starting at s0
  std::vector<std::vector<double>> actions;  // raw actions, one per transition
  std::vector<int> options;                  // active option per transition
  bool reached = false;
};

namespace detail {

inline latent::OptionLabel fixed_option(std::size_t index, std::size_t k) {
  const std::vector<double> h = latent::one_hot(index, k);
  return {h, h};
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

struct BeamNode {
  std::vector<int> options;
  std::vector<std::vector<double>> states;
  double score = 0.0;
};

// Score first; among equal scores the lexicographically smaller option
// sequence wins, which also prefers a prefix over any extension of it.
inline bool beats(const BeamNode& a, const BeamNode& b) {
  if (a.score != b.score) return a.score < b.score;
  return std::lexicographical_compare(a.options.begin(), a.options.end(), b.options.begin(), b.options.end());
}

}  // namespace detail

inline Plan plan(const training::Checkpoint& ckpt, const std::vector<double>& s0,
                 const std::vector<double>& s_goal, const PlannerConfig& cfg) {
  validate(cfg);
  const model::PodnetParams p = training::model_from_checkpoint(ckpt);
  if (s0.size() != p.d || s_goal.size() != p.d)
    throw std::invalid_argument("plan: state dimension mismatch with checkpoint");
  const std::vector<double> goal = data::normalize_state(s_goal, ckpt.norm);

  auto finish = [&](detail::BeamNode&& node) {
    Plan out;
    out.feasible = node.score <= cfg.goal_eps;
    out.terminal_distance = node.score;
    out.options = std::move(node.options);
    out.predicted_states = std::move(node.states);
    return out;
  };

  detail::BeamNode root;
  root.states.push_back(data::normalize_state(s0, ckpt.norm));
  root.score = detail::distance(root.states.back(), goal);
  if (root.score <= cfg.goal_eps) return finish(std::move(root));

  detail::BeamNode best = root;
  std::vector<detail::BeamNode> beam{std::move(root)};
  for (std::size_t depth = 0; depth < cfg.max_depth; ++depth) {
    std::vector<detail::BeamNode> children;
    children.reserve(beam.size() * p.k);
    for (const detail::BeamNode& node : beam) {
      for (std::size_t option = 0; option < p.k; ++option) {
        detail::BeamNode child;
        child.options = node.options;
        child.options.push_back(static_cast<int>(option));
        child.states = node.states;
        const latent::OptionLabel label = detail::fixed_option(option, p.k);
        for (std::size_t m = 0; m < cfg.option_duration; ++m)
          child.states.push_back(model::dynamics_predict(p, child.states.back(), label));
        child.score = detail::distance(child.states.back(), goal);
        children.push_back(std::move(child));
      }
    }
    std::sort(children.begin(), children.end(), detail::beats);
    if (detail::beats(children.front(), best)) best = children.front();
    if (children.front().score <= cfg.goal_eps) return finish(std::move(children.front()));
    if (children.size() > cfg.beam_width) children.resize(cfg.beam_width);
    beam = std::move(children);
  }
  // Depth cap hit without entering goal_eps; hand back the best sequence of
  // any length examined so far.
  return finish(std::move(best));
}

inline ExecutionTrace execute(const training::Checkpoint& ckpt, const data::EnvSpec& spec,
                              const std::vector<double>& s0, const std::vector<double>& s_goal,
                              const PlannerConfig& cfg) {
  validate(cfg);
  const model::PodnetParams p = training::model_from_checkpoint(ckpt);
  if (s0.size() != p.d || s_goal.size() != p.d)
    throw std::invalid_argument("execute: state dimension mismatch with checkpoint");
  if (spec.state_dim() != p.d)
    throw std::invalid_argument("execute: state dimension mismatch with env '" + spec.name + "'");
  const std::vector<double> goal = data::normalize_state(s_goal, ckpt.norm);

  ExecutionTrace trace;
  trace.states.push_back(s0);
  std::vector<double> state = s0;
  auto arrived = [&]() { return detail::distance(data::normalize_state(state, ckpt.norm), goal) <= cfg.goal_eps; };
  if (arrived()) {
    trace.reached = true;
    return trace;
  }

  // Each planned option is held for option_duration downsampled macro-steps,
  // and every macro-step spans the training stride in raw env steps.
  const std::size_t raw_steps = cfg.option_duration * ckpt.config.stride;
  bool capped = false;
  for (int attempt = 0; attempt <= 3 && !trace.reached && !capped; ++attempt) {
    const Plan current = plan(ckpt, state, s_goal, cfg);
    if (current.options.empty()) break;
    for (std::size_t i = 0; i < current.options.size() && !trace.reached && !capped; ++i) {
      const latent::OptionLabel label = detail::fixed_option(static_cast<std::size_t>(current.options[i]), p.k);
      for (std::size_t step = 0; step < raw_steps; ++step) {
        if (trace.actions.size() >= cfg.max_exec_steps) {
          capped = true;
          break;
        }
        const std::vector<double> normed = data::normalize_state(state, ckpt.norm);
        const std::vector<double> action = data::denormalize_action(model::policy_action(p, normed, label), ckpt.norm);
        state = data::env_step(spec, state, action);
        trace.actions.push_back(action);
        trace.options.push_back(current.options[i]);
        trace.states.push_back(state);
        if (arrived()) {
          trace.reached = true;
          break;
        }
      }
    }
  }
  return trace;
}

inline std::string plan_to_json(const Plan& plan) {
  jsonio::Writer w;
  w.begin_object();
  w.key("options");
  w.begin_array();
  for (int option : plan.options) w.integer(option);
  w.end_array();
  w.key("predicted_states");
  w.begin_array();
  for (const auto& s : plan.predicted_states) w.number_array(s);
  w.end_array();
  w.key("feasible");
  w.boolean(plan.feasible);
  w.key("terminal_distance");
  w.number(plan.terminal_distance);
  w.end_object();
  return w.str();
}

inline std::string trace_to_json(const ExecutionTrace& trace) {
  jsonio::Writer w;
  w.begin_object();
  w.key("states");
  w.begin_array();
  for (const auto& s : trace.states) w.number_array(s);
  w.end_array();
  w.key("actions");
  w.begin_array();
  for (const auto& a : trace.actions) w.number_array(a);
  w.end_array();
  w.key("options");
  w.begin_array();
  for (int option : trace.options) w.integer(option);
  w.end_array();
  w.key("reached");
  w.boolean(trace.reached);
  w.end_object();
  return w.str();
}

// One row per transition: the state the action was taken from, the action,
// and the option that produced it.
inline std::string trace_to_csv(const ExecutionTrace& trace) {
  if (trace.states.empty()) throw std::invalid_argument("trace_to_csv: empty trace");
  const std::size_t d = trace.states.front().size();
  const std::size_t m = trace.actions.empty() ? 0 : trace.actions.front().size();
  std::string out = "step";
  for (std::size_t i = 0; i < d; ++i) out += ",state" + std::to_string(i);
  for (std::size_t i = 0; i < m; ++i) out += ",action" + std::to_string(i);
  out += ",option\n";
  char cell[64];
  for (std::size_t t = 0; t < trace.actions.size(); ++t) {
    out += std::to_string(t);
    for (double v : trace.states[t]) {
      std::snprintf(cell, sizeof cell, ",%.17g", v);
      out += cell;
    }
    for (double v : trace.actions[t]) {
      std::snprintf(cell, sizeof cell, ",%.17g", v);
      out += cell;
    }
    out += "," + std::to_string(trace.options[t]) + "\n";
  }
  return out;
}

inline void save_plan(const Plan& plan, const std::string& path) { jsonio::write_file(path, plan_to_json(plan)); }

inline void save_trace(const ExecutionTrace& trace, const std::string& path) {
  jsonio::write_file(path, trace_to_json(trace));
}

}  // namespace podnet::planner
