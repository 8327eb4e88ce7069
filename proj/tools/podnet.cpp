// Command-line front end: data generation, training, option-count discovery,
// segmentation, evaluation, and planning, all backed by the library headers.
// Exit codes: 0 success, 1 runtime/data failure, 2 usage/config error.

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "podnet/evaluation.hpp"
#include "podnet/planner.hpp"
#include "podnet/runconfig.hpp"

namespace {

using namespace podnet;

// Thrown for problems the user can fix on the command line or in the config
// file; everything else maps to a runtime failure.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t parse_env_seed(const char* text) {
  if (text[0] == '\0' || text[0] == '-')
    throw UsageError("PODNET_SEED must be a non-negative integer, got '" + std::string(text) + "'");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text, &end, 10);
  if (errno != 0 || *end != '\0')
    throw UsageError("PODNET_SEED must be a non-negative integer, got '" + std::string(text) + "'");
  return v;
}

// Precedence: explicit --seed flag, then PODNET_SEED, then the config value.
std::uint64_t resolve_seed(bool flag_given, std::uint64_t flag_value, std::uint64_t config_value) {
  if (flag_given) return flag_value;
  if (const char* env = std::getenv("PODNET_SEED")) return parse_env_seed(env);
  return config_value;
}

// Empty path means "use defaults". File reads stay runtime failures; schema
// and validation problems become usage errors.
config::RunConfig load_config(const std::string& path) {
  config::RunConfig rc;
  if (path.empty()) return rc;
  const std::string text = jsonio::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config " + path + ": malformed JSON (" + std::string(e.what()) + ")");
  }
  try {
    return config::run_config_from_json(j, "config " + path);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

std::string env_spec_path(const std::string& dataset_path) {
  std::filesystem::path p(dataset_path);
  p.replace_extension();
  return p.string() + ".env.json";
}

struct GenArgs {
  std::string env_name;
  std::size_t n = 0;
  int k = 3;
  bool k_given = false;
  bool seed_given = false;
  std::uint64_t seed = 0;
  std::string out;
};

int run_gen(const GenArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed_given, a.seed, 0);
  data::EnvSpec spec;
  if (a.env_name == "waypoint2d") {
    spec = data::EnvSpec::waypoint2d(a.k, seed);
  } else if (a.env_name == "primitive1d") {
    if (a.k_given) throw UsageError("gen-data: --k applies only to waypoint2d");
    spec = data::EnvSpec::primitive1d();
  } else {
    throw UsageError("gen-data: unknown env '" + a.env_name + "'; valid envs: waypoint2d, primitive1d");
  }
  const data::Dataset ds = data::generate_dataset(spec, a.n, seed);
  data::save_dataset(ds, a.out);
  data::save_env_spec(spec, env_spec_path(a.out));
  std::printf("wrote %zu trajectories to %s and the env spec to %s\n", ds.trajectories.size(), a.out.c_str(),
              env_spec_path(a.out).c_str());
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string data_path;
  std::string out_dir;
  bool seed_given = false;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  config::RunConfig rc = load_config(a.config_path);
  if (!a.data_path.empty()) rc.paths.data = a.data_path;
  if (rc.paths.data.empty()) throw UsageError("train: no dataset; pass --data or set paths.data in the config");
  if (!a.out_dir.empty()) rc.paths.out = a.out_dir;
  if (rc.paths.out.empty()) throw UsageError("train: no output directory; pass --out or set paths.out in the config");
  rc.train.seed = resolve_seed(a.seed_given, a.seed, rc.train.seed);

  const data::Dataset ds = data::load_dataset(rc.paths.data);
  const auto [ckpt, hist] = training::train(ds, rc.train);
  std::filesystem::create_directories(rc.paths.out);
  training::save_checkpoint(ckpt, rc.paths.out + "/checkpoint.json");
  training::save_history(hist, rc.paths.out + "/history.csv");
  config::save_run_config(rc, rc.paths.out + "/config.resolved.json");
  std::printf("trained k=%zu on %zu trajectories; final heldout_bc %.6g; outputs in %s\n", rc.train.k,
              ds.trajectories.size(), ckpt.final_epoch.heldout_bc, rc.paths.out.c_str());
  return 0;
}

struct DiscoverArgs {
  std::string config_path;
  std::string data_path;
  std::size_t k_min = 0;
  std::size_t k_max = 0;
  std::string out;
  bool seed_given = false;
  std::uint64_t seed = 0;
};

int run_discover(const DiscoverArgs& a) {
  config::RunConfig rc = load_config(a.config_path);
  if (!a.data_path.empty()) rc.paths.data = a.data_path;
  if (rc.paths.data.empty()) throw UsageError("discover-k: no dataset; pass --data or set paths.data in the config");
  rc.train.seed = resolve_seed(a.seed_given, a.seed, rc.train.seed);
  if (a.k_min < 2 || a.k_min > a.k_max)
    throw UsageError("discover-k: need 2 <= kmin <= kmax, got [" + std::to_string(a.k_min) + ", " +
                     std::to_string(a.k_max) + "]");
  if (rc.train.k < a.k_min || rc.train.k > a.k_max)
    throw UsageError("discover-k: the search starts at train.k = " + std::to_string(rc.train.k) +
                     ", which lies outside [" + std::to_string(a.k_min) + ", " + std::to_string(a.k_max) + "]");

  const data::Dataset ds = data::load_dataset(rc.paths.data);
  const training::DiscoveryResult res = training::discover_num_options(ds, rc.train, a.k_min, a.k_max);
  std::string csv = "k,heldout_bc\n";
  char line[64];
  for (const auto& row : res.table) {
    std::printf("k=%zu  heldout_bc=%.6g\n", row.k, row.heldout_bc);
    std::snprintf(line, sizeof line, "%zu,%.17g\n", row.k, row.heldout_bc);
    csv += line;
  }
  std::printf("K_best = %zu\n", res.k_best);
  if (!a.out.empty()) jsonio::write_file(a.out, csv);
  return 0;
}

struct SegmentArgs {
  std::string checkpoint_path;
  std::string data_path;
  std::string out;
  std::string report_path;
  std::string plot_path;
};

std::string labels_over_time_csv(const std::vector<eval::TrajectorySegments>& segments) {
  std::string out = "id,step,label\n";
  for (const auto& seg : segments)
    for (std::size_t t = 0; t < seg.labels.size(); ++t)
      out += seg.id + "," + std::to_string(t) + "," + std::to_string(seg.labels[t]) + "\n";
  return out;
}

int run_segment(const SegmentArgs& a, bool require_report) {
  const training::Checkpoint ckpt = training::load_checkpoint(a.checkpoint_path);
  const data::Dataset ds = data::load_dataset(a.data_path);
  const eval::SegmentationResult res = eval::segment(ckpt, ds);
  if ((require_report || !a.report_path.empty()) && !res.report)
    throw std::runtime_error("no trajectory carries true labels, so no report can be computed");

  if (require_report) {
    eval::save_report(*res.report, a.out);
  } else {
    eval::save_segments(res.segments, a.out);
    if (!a.report_path.empty()) eval::save_report(*res.report, a.report_path);
  }
  if (!a.plot_path.empty()) jsonio::write_file(a.plot_path, labels_over_time_csv(res.segments));

  if (res.report) {
    std::printf("segmented %zu trajectories: matched_accuracy %.4f, nmi %.4f, boundary_f1 %.4f\n",
                res.segments.size(), res.report->matched_accuracy, res.report->nmi, res.report->boundary_f1);
  } else {
    std::printf("segmented %zu trajectories (no true labels, metrics skipped)\n", res.segments.size());
  }
  return 0;
}

struct PlanArgs {
  std::string checkpoint_path;
  std::string config_path;
  std::vector<double> s0;
  std::vector<double> goal;
  std::string out;
  bool execute = false;
  std::string env_path;
  std::string trace_path;
  std::string trace_csv_path;
};

int run_plan(const PlanArgs& a) {
  const config::RunConfig rc = load_config(a.config_path);
  if (a.execute && a.env_path.empty() && a.config_path.empty())
    throw UsageError("plan: --execute needs an env spec; pass --env or a config with an env section");

  const training::Checkpoint ckpt = training::load_checkpoint(a.checkpoint_path);
  const planner::Plan pl = planner::plan(ckpt, a.s0, a.goal, rc.planner);
  if (!a.out.empty()) planner::save_plan(pl, a.out);
  std::printf("plan: %zu options, feasible=%s, terminal_distance=%.6g\n", pl.options.size(),
              pl.feasible ? "true" : "false", pl.terminal_distance);

  if (a.execute) {
    const data::EnvSpec spec = a.env_path.empty() ? rc.env : data::load_env_spec(a.env_path);
    const planner::ExecutionTrace trace = planner::execute(ckpt, spec, a.s0, a.goal, rc.planner);
    if (!a.trace_path.empty()) planner::save_trace(trace, a.trace_path);
    if (!a.trace_csv_path.empty()) jsonio::write_file(a.trace_csv_path, planner::trace_to_csv(trace));
    std::printf("execute: reached=%s after %zu steps\n", trace.reached ? "true" : "false", trace.actions.size());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"podnet: option discovery, segmentation, and planning from demonstrations"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic demonstration dataset");
  gen_cmd->add_option("--env", gen.env_name, "Environment: waypoint2d or primitive1d")->required();
  gen_cmd->add_option("--n", gen.n, "Number of trajectories")->required()->check(CLI::PositiveNumber);
  CLI::Option* gen_k = gen_cmd->add_option("--k", gen.k, "Number of waypoints (waypoint2d only)");
  gen_k->check(CLI::Range(2, 64));
  CLI::Option* gen_seed = gen_cmd->add_option("--seed", gen.seed, "Generation seed");
  gen_cmd->add_option("--out", gen.out, "Dataset JSONL path; the env spec lands next to it")->required();

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model on a demonstration dataset");
  train_cmd->add_option("--config", train.config_path, "Run config JSON");
  train_cmd->add_option("--data", train.data_path, "Dataset JSONL");
  train_cmd->add_option("--out", train.out_dir, "Output directory");
  CLI::Option* train_seed = train_cmd->add_option("--seed", train.seed, "Training seed");

  DiscoverArgs disc;
  CLI::App* disc_cmd = app.add_subcommand("discover-k", "Search for the number of options by held-out BC loss");
  disc_cmd->add_option("--config", disc.config_path, "Run config JSON");
  disc_cmd->add_option("--data", disc.data_path, "Dataset JSONL");
  disc_cmd->add_option("--kmin", disc.k_min, "Smallest K to consider")->required();
  disc_cmd->add_option("--kmax", disc.k_max, "Largest K to consider")->required();
  disc_cmd->add_option("--out", disc.out, "Optional CSV path for the (k, heldout_bc) table");
  CLI::Option* disc_seed = disc_cmd->add_option("--seed", disc.seed, "Training seed");

  SegmentArgs seg;
  CLI::App* seg_cmd = app.add_subcommand("segment", "Label a dataset with inferred options");
  seg_cmd->add_option("--checkpoint", seg.checkpoint_path, "Trained checkpoint JSON")->required();
  seg_cmd->add_option("--data", seg.data_path, "Dataset JSONL")->required();
  seg_cmd->add_option("--out", seg.out, "Labels JSONL path")->required();
  seg_cmd->add_option("--report", seg.report_path, "Optional metrics report JSON (needs true labels)");
  seg_cmd->add_option("--plot", seg.plot_path, "Optional labels-over-time CSV for plotting");

  SegmentArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score inferred options against true labels");
  eval_cmd->add_option("--checkpoint", ev.checkpoint_path, "Trained checkpoint JSON")->required();
  eval_cmd->add_option("--data", ev.data_path, "Labeled dataset JSONL")->required();
  eval_cmd->add_option("--out", ev.out, "Metrics report JSON path")->required();

  PlanArgs plan;
  CLI::App* plan_cmd = app.add_subcommand("plan", "Plan an option sequence toward a goal state");
  plan_cmd->add_option("--checkpoint", plan.checkpoint_path, "Trained checkpoint JSON")->required();
  plan_cmd->add_option("--config", plan.config_path, "Run config JSON (planner section)");
  plan_cmd->add_option("--s0", plan.s0, "Start state, comma-separated")->required()->delimiter(',');
  plan_cmd->add_option("--goal", plan.goal, "Goal state, comma-separated")->required()->delimiter(',');
  plan_cmd->add_option("--out", plan.out, "Plan JSON path");
  plan_cmd->add_flag("--execute", plan.execute, "Run the plan closed-loop in the environment");
  plan_cmd->add_option("--env", plan.env_path, "Env spec JSON for --execute");
  plan_cmd->add_option("--trace", plan.trace_path, "Execution trace JSON path");
  plan_cmd->add_option("--trace-csv", plan.trace_csv_path, "Execution trace CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "podnet: %s\n", e.what());
    return 2;
  }

  gen.k_given = gen_k->count() > 0;
  gen.seed_given = gen_seed->count() > 0;
  train.seed_given = train_seed->count() > 0;
  disc.seed_given = disc_seed->count() > 0;

  try {
    if (gen_cmd->parsed()) return run_gen(gen);
    if (train_cmd->parsed()) return run_train(train);
    if (disc_cmd->parsed()) return run_discover(disc);
    if (seg_cmd->parsed()) return run_segment(seg, false);
    if (eval_cmd->parsed()) return run_segment(ev, true);
    if (plan_cmd->parsed()) return run_plan(plan);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "podnet: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "podnet: %s\n", e.what());
    return 1;
  }
  return 2;  // unreachable with require_subcommand(1)
}
