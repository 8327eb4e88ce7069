#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "podnet/data.hpp"

using namespace podnet;
using namespace podnet::data;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "podnet-test-data";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
  return a.id == b.id && a.env_name == b.env_name && a.states == b.states && a.actions == b.actions &&
         a.true_labels == b.true_labels;
}

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.env_name != b.env_name || a.d != b.d || a.m != b.m || a.trajectories.size() != b.trajectories.size())
    return false;
  for (std::size_t i = 0; i < a.trajectories.size(); ++i)
    if (!same_trajectory(a.trajectories[i], b.trajectories[i])) return false;
  return true;
}

Trajectory ramp_trajectory(std::size_t n_states, std::size_t d, std::size_t m) {
  Trajectory t;
  t.id = "ramp";
  t.env_name = "waypoint2d";
  for (std::size_t i = 0; i < n_states; ++i) t.states.push_back(std::vector<double>(d, static_cast<double>(i)));
  for (std::size_t i = 0; i + 1 < n_states; ++i) {
    t.actions.push_back(std::vector<double>(m, 0.1 * static_cast<double>(i)));
    t.true_labels.push_back(static_cast<int>(i % 3));
  }
  return t;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("env_step clips the action per axis and stays in bounds") {
    EnvSpec spec = EnvSpec::waypoint2d(3, 7);
    spec.max_speed = 0.5;
    CHECK(env_step(spec, {0.0, 0.0}, {1.0, 0.0}) == std::vector<double>{0.5, 0.0});
    CHECK(env_step(spec, {0.0, 0.0}, {0.0, 0.0}) == std::vector<double>{0.0, 0.0});
    CHECK(env_step(spec, {0.0, 0.0}, {0.2, -0.1}) == std::vector<double>{0.2, 0.0});
    CHECK(env_step(spec, {5.0, 5.0}, {0.2, -0.1}) == std::vector<double>{5.2, 4.9});
    CHECK(env_step(spec, {9.9, 0.1}, {0.5, -0.5}) == std::vector<double>{10.0, 0.0});
    CHECK_THROWS_AS(env_step(spec, {0.0}, {0.0, 0.0}), std::invalid_argument);
  }

  TEST_CASE("downsample keeps every stride-th state and the action in force there") {
    Trajectory t = ramp_trajectory(10, 1, 1);

    Trajectory d2 = downsample(t, 2);
    REQUIRE(d2.states.size() == 5);
    for (std::size_t j = 0; j < 5; ++j) CHECK(d2.states[j] == t.states[2 * j]);
    REQUIRE(d2.actions.size() == 4);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(d2.actions[j] == t.actions[2 * j]);
      CHECK(d2.true_labels[j] == t.true_labels[2 * j]);
    }

    Trajectory d1 = downsample(t, 1);
    CHECK(same_trajectory(d1, t));

    Trajectory nine = ramp_trajectory(9, 1, 1);
    Trajectory d4 = downsample(nine, 4);
    REQUIRE(d4.states.size() == 3);
    CHECK(d4.states[0] == nine.states[0]);
    CHECK(d4.states[1] == nine.states[4]);
    CHECK(d4.states[2] == nine.states[8]);
  }

  TEST_CASE("downsample output length is ceil((T+1)/stride) for every stride") {
    for (std::size_t n_states : {2u, 5u, 11u, 37u}) {
      Trajectory t = ramp_trajectory(n_states, 2, 2);
      for (std::size_t stride = 1; stride <= 7; ++stride) {
        const std::size_t expected = (n_states + stride - 1) / stride;
        if (expected < 2) {
          CHECK_THROWS_AS(downsample(t, stride), std::invalid_argument);
          continue;
        }
        Trajectory out = downsample(t, stride);
        CHECK(out.states.size() == expected);
        CHECK(out.actions.size() == expected - 1);
        CHECK(out.true_labels.size() == expected - 1);
      }
    }
    CHECK_THROWS_AS(downsample(ramp_trajectory(4, 1, 1), 0), std::invalid_argument);
  }

  TEST_CASE("normalize matches the two-point z-score by hand") {
    Dataset ds;
    ds.env_name = "primitive1d";
    ds.d = ds.m = 1;
    Trajectory t;
    t.id = "pair";
    t.env_name = "primitive1d";
    t.states = {{0.0}, {2.0}};
    t.actions = {{2.0}};
    ds.trajectories.push_back(t);

    auto [normed, stats] = normalize(ds);
    CHECK(stats.mean == std::vector<double>{1.0});
    CHECK(stats.std_dev == std::vector<double>{1.0});
    CHECK(normed.trajectories[0].states[0] == std::vector<double>{-1.0});
    CHECK(normed.trajectories[0].states[1] == std::vector<double>{1.0});
    CHECK(normed.trajectories[0].actions[0] == std::vector<double>{2.0});
  }

  TEST_CASE("normalize floors the std of a constant dimension") {
    Dataset ds;
    ds.env_name = "waypoint2d";
    ds.d = ds.m = 2;
    Trajectory t;
    t.id = "flat";
    t.env_name = "waypoint2d";
    t.states = {{3.0, 0.0}, {3.0, 2.0}};
    t.actions = {{0.0, 2.0}};
    ds.trajectories.push_back(t);

    auto [normed, stats] = normalize(ds);
    CHECK(stats.std_dev[0] == 1e-8);
    CHECK(normed.trajectories[0].states[0][0] == 0.0);
    CHECK(normed.trajectories[0].states[1][0] == 0.0);
  }

  TEST_CASE("normalize round-trips and leaves pooled stats at zero mean, unit std") {
    EnvSpec spec = EnvSpec::waypoint2d(3, 11);
    Dataset raw = generate_dataset(spec, 6, 42);
    auto [normed, stats] = normalize(raw);

    for (std::size_t i = 0; i < raw.trajectories.size(); ++i) {
      const auto& orig = raw.trajectories[i];
      const auto& n = normed.trajectories[i];
      for (std::size_t s = 0; s < orig.states.size(); ++s) {
        auto rt = denormalize_state(n.states[s], stats);
        for (std::size_t k = 0; k < rt.size(); ++k) CHECK(std::abs(rt[k] - orig.states[s][k]) < 1e-9);
      }
      for (std::size_t s = 0; s < orig.actions.size(); ++s) {
        auto rt = denormalize_action(n.actions[s], stats);
        for (std::size_t k = 0; k < rt.size(); ++k) CHECK(std::abs(rt[k] - orig.actions[s][k]) < 1e-9);
      }
    }

    std::vector<double> mean(normed.d, 0.0), var(normed.d, 0.0);
    std::size_t count = 0;
    for (const auto& t : normed.trajectories)
      for (const auto& s : t.states) {
        for (std::size_t k = 0; k < normed.d; ++k) mean[k] += s[k];
        ++count;
      }
    for (auto& v : mean) v /= static_cast<double>(count);
    for (const auto& t : normed.trajectories)
      for (const auto& s : t.states)
        for (std::size_t k = 0; k < normed.d; ++k) var[k] += (s[k] - mean[k]) * (s[k] - mean[k]);
    for (std::size_t k = 0; k < normed.d; ++k) {
      CHECK(std::abs(mean[k]) < 1e-9);
      CHECK(std::abs(std::sqrt(var[k] / static_cast<double>(count)) - 1.0) < 1e-6);
    }
  }

  TEST_CASE("split partitions trajectories deterministically") {
    EnvSpec spec = EnvSpec::primitive1d();
    Dataset ds = generate_dataset(spec, 10, 5);

    auto [train, holdout] = split(ds, 0.2, 3);
    CHECK(train.size() == 8);
    CHECK(holdout.size() == 2);

    std::multiset<std::string> in_ids, out_ids;
    for (const auto& t : ds.trajectories) in_ids.insert(t.id);
    for (const auto& t : train.trajectories) out_ids.insert(t.id);
    for (const auto& t : holdout.trajectories) out_ids.insert(t.id);
    CHECK(in_ids == out_ids);

    auto [train2, holdout2] = split(ds, 0.2, 3);
    CHECK(same_dataset(train, train2));
    CHECK(same_dataset(holdout, holdout2));

    CHECK_THROWS_AS(split(ds, 0.05, 0), std::invalid_argument);
    CHECK_THROWS_AS(split(ds, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(split(ds, 1.0, 0), std::invalid_argument);
  }

  TEST_CASE("waypoint2d demonstrations carry piecewise-constant labels with >= 2 distinct segments") {
    EnvSpec spec = EnvSpec::waypoint2d(3, 0);
    Dataset ds = generate_dataset(spec, 10, 0);
    REQUIRE(ds.size() == 10);
    for (const auto& t : ds.trajectories) {
      CHECK(t.states.size() == t.actions.size() + 1);
      REQUIRE(t.true_labels.size() == t.actions.size());
      // run-length scan of the label sequence
      std::size_t segments = 1;
      std::size_t shortest_run = t.true_labels.size(), run = 1;
      std::set<int> distinct{t.true_labels.front()};
      for (std::size_t i = 1; i < t.true_labels.size(); ++i) {
        distinct.insert(t.true_labels[i]);
        if (t.true_labels[i] != t.true_labels[i - 1]) {
          ++segments;
          shortest_run = std::min(shortest_run, run);
          run = 1;
        } else {
          ++run;
        }
      }
      shortest_run = std::min(shortest_run, run);
      CHECK(segments >= 2);
      CHECK(distinct.size() >= 2);
      CHECK(shortest_run >= 2);  // waypoints sit far apart, so no 1-step segments
      for (int label : t.true_labels) {
        CHECK(label >= 0);
        CHECK(label < spec.k_true);
      }
    }
  }

  TEST_CASE("primitive1d raw deltas stay within 4 sigma of a primitive velocity") {
    EnvSpec spec = EnvSpec::primitive1d();
    Dataset ds = generate_dataset(spec, 1, 1);
    const auto& t = ds.trajectories[0];
    REQUIRE(t.states.size() >= 2);
    for (std::size_t i = 0; i + 1 < t.states.size(); ++i) {
      const double delta = t.states[i + 1][0] - t.states[i][0];
      double best = 1e9;
      for (double v : spec.velocities) best = std::min(best, std::abs(delta - v));
      CHECK(best <= 4.0 * spec.noise_std + 1e-12);
      // and the label points at the matching primitive
      const double labeled = spec.velocities[static_cast<std::size_t>(t.true_labels[i])];
      CHECK(std::abs(delta - labeled) <= 4.0 * spec.noise_std + 1e-12);
    }
  }

  TEST_CASE("generate_dataset validates its arguments") {
    EnvSpec spec = EnvSpec::waypoint2d(3, 0);
    CHECK_THROWS_AS(generate_dataset(spec, 0, 0), std::invalid_argument);
    spec.name = "mystery";
    CHECK_THROWS_AS(generate_dataset(spec, 1, 0), std::invalid_argument);
  }

  TEST_CASE("generation is deterministic down to the serialized bytes") {
    EnvSpec spec = EnvSpec::waypoint2d(3, 9);
    Dataset a = generate_dataset(spec, 4, 17);
    Dataset b = generate_dataset(spec, 4, 17);
    std::string ja, jb;
    for (const auto& t : a.trajectories) ja += trajectory_to_json(t) + "\n";
    for (const auto& t : b.trajectories) jb += trajectory_to_json(t) + "\n";
    CHECK(ja == jb);

    // a different seed must actually change the data
    Dataset c = generate_dataset(spec, 4, 18);
    std::string jc;
    for (const auto& t : c.trajectories) jc += trajectory_to_json(t) + "\n";
    CHECK(ja != jc);
  }

  TEST_CASE("dataset JSONL round trip is exact") {
    EnvSpec spec = EnvSpec::primitive1d();
    Dataset ds = generate_dataset(spec, 5, 23);
    const std::string path = temp_path("roundtrip.jsonl");
    save_dataset(ds, path);
    Dataset back = load_dataset(path);
    CHECK(same_dataset(ds, back));

    // serialized floats carry enough digits that a second trip is byte-stable
    save_dataset(back, temp_path("roundtrip2.jsonl"));
    CHECK(jsonio::read_file(path) == jsonio::read_file(temp_path("roundtrip2.jsonl")));
  }

  TEST_CASE("dataset loader reports the offending line and field") {
    const std::string path = temp_path("broken.jsonl");

    jsonio::write_file(path,
                       "{\"id\":\"a\",\"env\":\"primitive1d\",\"states\":[[0.0],[0.1]],\"actions\":[[0.1]]}\n"
                       "{\"id\":\"b\",\"env\":\"primitive1d\",\"states\":[[0.0],[0.1]]}\n");
    try {
      load_dataset(path);
      FAIL("expected a missing-field error");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("line 2") != std::string::npos);
      CHECK(msg.find("actions") != std::string::npos);
    }

    jsonio::write_file(path, "{\"id\":\"a\",\"env\":\"primitive1d\",\"states\":[[0.0]],\"actions\":[[0.1]]}\n");
    CHECK_THROWS_AS(load_dataset(path), std::runtime_error);

    jsonio::write_file(path, "not json\n");
    CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
  }

  TEST_CASE("env spec round-trips through JSON") {
    EnvSpec spec = EnvSpec::waypoint2d(4, 3);
    const std::string path = temp_path("spec.json");
    save_env_spec(spec, path);
    EnvSpec back = load_env_spec(path);
    CHECK(back.name == spec.name);
    CHECK(back.k_true == spec.k_true);
    CHECK(back.max_speed == spec.max_speed);
    CHECK(back.noise_std == spec.noise_std);
    CHECK(back.arrival_radius == spec.arrival_radius);
    CHECK(back.bounds.lo == spec.bounds.lo);
    CHECK(back.bounds.hi == spec.bounds.hi);
    CHECK(back.waypoints == spec.waypoints);

    EnvSpec prim = EnvSpec::primitive1d();
    save_env_spec(prim, path);
    EnvSpec prim_back = load_env_spec(path);
    CHECK(prim_back.velocities == prim.velocities);
    CHECK(prim_back.k_true == 3);
  }

  TEST_CASE("waypoint2d specs keep waypoints apart and inside the arena") {
    for (std::uint64_t seed : {0ull, 1ull, 2ull, 3ull}) {
      EnvSpec spec = EnvSpec::waypoint2d(3, seed);
      REQUIRE(spec.waypoints.size() == 3);
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(spec.waypoints[i][0] >= spec.bounds.lo[0]);
        CHECK(spec.waypoints[i][1] <= spec.bounds.hi[1]);
        for (std::size_t j = i + 1; j < 3; ++j) {
          const double dx = spec.waypoints[i][0] - spec.waypoints[j][0];
          const double dy = spec.waypoints[i][1] - spec.waypoints[j][1];
          CHECK(std::sqrt(dx * dx + dy * dy) >= 3.0);
        }
      }
    }
  }

  TEST_CASE("serialized doubles survive a parse round trip bit-exactly") {
    Trajectory t;
    t.id = "digits";
    t.env_name = "primitive1d";
    t.states = {{0.1}, {1.0 / 3.0}, {3.141592653589793}, {-2.2250738585072014e-308}};
    t.actions = {{1e-17}, {123456789.123456789}, {-0.30000000000000004}};
    const std::string line = trajectory_to_json(t);
    auto j = nlohmann::json::parse(line);
    for (std::size_t i = 0; i < t.states.size(); ++i)
      CHECK(j["states"][i][0].get<double>() == t.states[i][0]);
    for (std::size_t i = 0; i < t.actions.size(); ++i)
      CHECK(j["actions"][i][0].get<double>() == t.actions[i][0]);
  }
}
