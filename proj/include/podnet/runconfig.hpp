#pragma once

// One JSON document configuring a whole run: the environment spec, training
// hyperparameters, planner settings, and default file paths. Sections and
// keys are optional, but unknown keys are rejected by name so a typo cannot
// silently fall back to a default. Serializing always materializes every
// field, so a persisted config reproduces the run exactly.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "podnet/data.hpp"
#include "podnet/jsonio.hpp"
#include "podnet/planner.hpp"
#include "podnet/training.hpp"

namespace podnet::config {

struct RunConfig {
  data::EnvSpec env = data::EnvSpec::waypoint2d(3, 0);
  training::TrainConfig train;
  planner::PlannerConfig planner;
  struct Paths {
    std::string data;  // dataset JSONL
    std::string out;   // output file or directory, per command
  } paths;
};

namespace detail {

inline const nlohmann::json& section(const nlohmann::json& j, const char* name, const std::string& context) {
  const auto& s = j.at(name);
  if (!s.is_object()) throw std::runtime_error(context + ": section '" + std::string(name) + "' must be an object");
  return s;
}

inline double read_real(const nlohmann::json& s, const char* key, double fallback, const std::string& context) {
  if (!s.contains(key)) return fallback;
  const auto& v = s.at(key);
  if (!v.is_number()) throw std::runtime_error(context + ": key '" + std::string(key) + "' must be a number");
  return v.get<double>();
}

inline std::uint64_t read_count(const nlohmann::json& s, const char* key, std::uint64_t fallback,
                                const std::string& context) {
  if (!s.contains(key)) return fallback;
  const auto& v = s.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw std::runtime_error(context + ": key '" + std::string(key) + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::string read_string(const nlohmann::json& s, const char* key, const std::string& fallback,
                               const std::string& context) {
  if (!s.contains(key)) return fallback;
  const auto& v = s.at(key);
  if (!v.is_string()) throw std::runtime_error(context + ": key '" + std::string(key) + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j, const std::string& context) {
  if (!j.is_object()) throw std::runtime_error(context + ": config root must be an object");
  jsonio::reject_unknown_keys(j, {"env", "train", "planner", "paths"}, context);
  RunConfig rc;

  if (j.contains("env")) rc.env = data::env_spec_from_json(detail::section(j, "env", context), context + ": env");

  if (j.contains("train")) {
    const std::string tctx = context + ": train";
    const auto& t = detail::section(j, "train", context);
    jsonio::reject_unknown_keys(t,
                                {"k", "beta", "lr", "epochs", "batch_size", "stride", "horizon", "tau0", "tau_min",
                                 "tau_decay_fraction", "holdout_fraction", "seed", "kl_mode", "kl_sign", "hidden",
                                 "mlp_width"},
                                tctx);
    training::TrainConfig& c = rc.train;
    c.k = detail::read_count(t, "k", c.k, tctx);
    c.beta = detail::read_real(t, "beta", c.beta, tctx);
    c.lr = detail::read_real(t, "lr", c.lr, tctx);
    c.epochs = detail::read_count(t, "epochs", c.epochs, tctx);
    c.batch_size = detail::read_count(t, "batch_size", c.batch_size, tctx);
    c.stride = detail::read_count(t, "stride", c.stride, tctx);
    c.horizon = detail::read_count(t, "horizon", c.horizon, tctx);
    c.tau0 = detail::read_real(t, "tau0", c.tau0, tctx);
    c.tau_min = detail::read_real(t, "tau_min", c.tau_min, tctx);
    c.tau_decay_fraction = detail::read_real(t, "tau_decay_fraction", c.tau_decay_fraction, tctx);
    c.holdout_fraction = detail::read_real(t, "holdout_fraction", c.holdout_fraction, tctx);
    c.seed = detail::read_count(t, "seed", c.seed, tctx);
    if (t.contains("kl_mode"))
      c.kl_mode = training::kl_mode_from_name(detail::read_string(t, "kl_mode", "", tctx), tctx);
    c.kl_sign = detail::read_real(t, "kl_sign", c.kl_sign, tctx);
    c.hidden = detail::read_count(t, "hidden", c.hidden, tctx);
    c.mlp_width = detail::read_count(t, "mlp_width", c.mlp_width, tctx);
    training::validate(c);
  }

  if (j.contains("planner")) {
    const std::string pctx = context + ": planner";
    const auto& p = detail::section(j, "planner", context);
    jsonio::reject_unknown_keys(p, {"beam_width", "max_depth", "option_duration", "goal_eps", "max_exec_steps"}, pctx);
    planner::PlannerConfig& c = rc.planner;
    c.beam_width = detail::read_count(p, "beam_width", c.beam_width, pctx);
    c.max_depth = detail::read_count(p, "max_depth", c.max_depth, pctx);
    c.option_duration = detail::read_count(p, "option_duration", c.option_duration, pctx);
    c.goal_eps = detail::read_real(p, "goal_eps", c.goal_eps, pctx);
    c.max_exec_steps = detail::read_count(p, "max_exec_steps", c.max_exec_steps, pctx);
    planner::validate(c);
  }

  if (j.contains("paths")) {
    const std::string pctx = context + ": paths";
    const auto& p = detail::section(j, "paths", context);
    jsonio::reject_unknown_keys(p, {"data", "out"}, pctx);
    rc.paths.data = detail::read_string(p, "data", "", pctx);
    rc.paths.out = detail::read_string(p, "out", "", pctx);
  }
  return rc;
}

inline std::string run_config_to_json(const RunConfig& rc) {
  jsonio::Writer w;
  w.begin_object();
  w.key("env");
  w.raw(data::env_spec_to_json(rc.env));
  w.key("train");
  training::write_train_config(w, rc.train);
  w.key("planner");
  w.begin_object();
  w.key("beam_width");
  w.unsigned_integer(rc.planner.beam_width);
  w.key("max_depth");
  w.unsigned_integer(rc.planner.max_depth);
  w.key("option_duration");
  w.unsigned_integer(rc.planner.option_duration);
  w.key("goal_eps");
  w.number(rc.planner.goal_eps);
  w.key("max_exec_steps");
  w.unsigned_integer(rc.planner.max_exec_steps);
  w.end_object();
  w.key("paths");
  w.begin_object();
  w.key("data");
  w.string(rc.paths.data);
  w.key("out");
  w.string(rc.paths.out);
  w.end_object();
  w.end_object();
  return w.take();
}

inline RunConfig load_run_config(const std::string& path) {
  const std::string context = "load_run_config: " + path;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(jsonio::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(context + ": malformed JSON (" + std::string(e.what()) + ")");
  }
  return run_config_from_json(j, context);
}

inline void save_run_config(const RunConfig& rc, const std::string& path) {
  jsonio::write_file(path, run_config_to_json(rc) + "\n");
}

}  // namespace podnet::config
