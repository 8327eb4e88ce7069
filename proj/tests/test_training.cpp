#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "podnet/training.hpp"

using namespace podnet;
using podnet::nn::Tensor;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "podnet-test-training";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

data::Dataset tiny_dataset(std::size_t n_traj, std::uint64_t seed) {
  return data::generate_dataset(data::EnvSpec::primitive1d(), n_traj, seed);
}

// Small everything: the suite exercises contracts, not model quality.
training::TrainConfig tiny_config() {
  training::TrainConfig config;
  config.k = 3;
  config.epochs = 4;
  config.batch_size = 8;
  config.hidden = 8;
  config.mlp_width = 8;
  config.seed = 11;
  return config;
}

std::string dataset_fingerprint(const data::Dataset& dataset) {
  std::string out = dataset.env_name + "\n";
  for (const auto& traj : dataset.trajectories) out += data::trajectory_to_json(traj) + "\n";
  return out;
}

// A checkpoint whose policy emits a fixed action and whose inference picks
// option 0 everywhere (zero logits, ties resolve to the lowest index).
training::Checkpoint constant_action_stub(double action) {
  training::Checkpoint ckpt;
  ckpt.config.k = 2;
  ckpt.config.stride = 2;
  ckpt.config.hidden = 3;
  ckpt.config.mlp_width = 1;
  ckpt.norm.mean = {0.0};
  ckpt.norm.std_dev = {1.0};
  ckpt.params.add("inference.lstm.Wx", Tensor::zeros({12, 3}));
  ckpt.params.add("inference.lstm.Wh", Tensor::zeros({12, 3}));
  ckpt.params.add("inference.lstm.b", Tensor::zeros({12}));
  ckpt.params.add("inference.head.W", Tensor::zeros({2, 3}));
  ckpt.params.add("inference.head.b", Tensor::zeros({2}));
  ckpt.params.add("policy.l0.W", Tensor::zeros({1, 3}));
  Tensor pb = Tensor::zeros({1});
  pb.data[0] = action;
  ckpt.params.add("policy.l0.b", pb);
  ckpt.params.add("dynamics.l0.W", Tensor::zeros({1, 3}));
  ckpt.params.add("dynamics.l0.b", Tensor::zeros({1}));
  return ckpt;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (const double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

// Mean per-step posterior entropy under greedy inference on the training data
// as the checkpoint preprocesses it.
double mean_posterior_entropy(const training::Checkpoint& ckpt, const data::Dataset& dataset) {
  const model::PodnetParams p = training::model_from_checkpoint(ckpt);
  const data::Dataset ds = data::apply_normalization(data::downsample(dataset, ckpt.config.stride), ckpt.norm);
  SplitRng rng(0);
  double sum = 0.0;
  std::size_t steps = 0;
  for (const auto& traj : ds.trajectories) {
    const model::OptionAssignment assign =
        model::infer_options(p, traj.states, 1.0, rng, model::InferMode::kGreedy);
    for (const auto& posterior : assign.posteriors) sum += entropy(posterior.probs);
    steps += assign.posteriors.size();
  }
  return sum / static_cast<double>(steps);
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("identical config and seed reproduce the history byte for byte") {
    const data::Dataset ds = tiny_dataset(10, 21);
    const training::TrainConfig config = tiny_config();
    const auto [ckpt_a, hist_a] = training::train(ds, config);
    const auto [ckpt_b, hist_b] = training::train(ds, config);
    CHECK(training::history_to_csv(hist_a) == training::history_to_csv(hist_b));
    CHECK(training::checkpoint_to_json(ckpt_a) == training::checkpoint_to_json(ckpt_b));
  }

  TEST_CASE("a different seed changes the history") {
    const data::Dataset ds = tiny_dataset(10, 21);
    training::TrainConfig config = tiny_config();
    const auto [ckpt_a, hist_a] = training::train(ds, config);
    config.seed += 1;
    const auto [ckpt_b, hist_b] = training::train(ds, config);
    CHECK(training::history_to_csv(hist_a) != training::history_to_csv(hist_b));
  }

  TEST_CASE("training reduces the mean total loss between first and last epoch") {
    const data::Dataset ds = tiny_dataset(12, 33);
    training::TrainConfig config = tiny_config();
    config.epochs = 20;
    config.lr = 1e-2;
    const auto [ckpt, hist] = training::train(ds, config);
    REQUIRE(hist.epochs.size() == 20);
    CHECK(hist.epochs.back().total < hist.epochs.front().total);
  }

  TEST_CASE("a batch larger than the dataset degrades to one batch per epoch") {
    const data::Dataset ds = tiny_dataset(5, 8);
    training::TrainConfig config = tiny_config();
    config.epochs = 1;
    config.batch_size = 64;
    const auto [ckpt, hist] = training::train(ds, config);
    REQUIRE(hist.epochs.size() == 1);
    CHECK(hist.epochs[0].tau == config.tau0);  // single step, schedule not yet advanced
  }

  TEST_CASE("train leaves the input dataset untouched") {
    const data::Dataset ds = tiny_dataset(6, 4);
    const std::string before = dataset_fingerprint(ds);
    training::train(ds, tiny_config());
    CHECK(dataset_fingerprint(ds) == before);
  }

  TEST_CASE("train rejects an empty dataset and trajectories shorter than the horizon") {
    CHECK_THROWS_AS(training::train(data::Dataset{}, tiny_config()), std::invalid_argument);

    data::Dataset short_ds;
    short_ds.env_name = "primitive1d";
    short_ds.d = 1;
    short_ds.m = 1;
    data::Trajectory traj;
    traj.id = "stub-0000";
    traj.env_name = "primitive1d";
    for (int i = 0; i < 6; ++i) traj.states.push_back({0.1 * i});
    for (int i = 0; i < 5; ++i) traj.actions.push_back({0.1});
    short_ds.trajectories.push_back(traj);
    try {
      training::train(short_ds, tiny_config());  // stride 5 keeps 2 states, horizon is 3
      FAIL("expected a length error");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("stub-0000") != std::string::npos);
      CHECK(msg.find("downsampled") != std::string::npos);
    }
  }

  TEST_CASE("config validation rejects out-of-range fields") {
    const data::Dataset ds = tiny_dataset(4, 2);
    training::TrainConfig config = tiny_config();
    config.epochs = 0;
    CHECK_THROWS_AS(training::train(ds, config), std::invalid_argument);
    config = tiny_config();
    config.holdout_fraction = 1.0;
    CHECK_THROWS_AS(training::train(ds, config), std::invalid_argument);
    config = tiny_config();
    config.k = 0;
    CHECK_THROWS_AS(training::train(ds, config), std::invalid_argument);
    config = tiny_config();
    config.kl_sign = 0.5;
    CHECK_THROWS_AS(training::train(ds, config), std::invalid_argument);
  }

  TEST_CASE("evaluate_bc_loss is zero for a policy that replays the demo actions") {
    data::Dataset ds;
    ds.env_name = "primitive1d";
    ds.d = 1;
    ds.m = 1;
    data::Trajectory traj;
    traj.id = "const-0000";
    traj.env_name = "primitive1d";
    for (int i = 0; i < 9; ++i) traj.states.push_back({0.3 * i - 1.0});
    for (int i = 0; i < 8; ++i) traj.actions.push_back({0.25});
    ds.trajectories.push_back(traj);

    const training::Checkpoint stub = constant_action_stub(0.25);
    const double loss = training::evaluate_bc_loss(stub, ds);
    CHECK(loss == 0.0);
    CHECK(training::evaluate_bc_loss(stub, ds) == loss);  // pure: no hidden state between calls
    CHECK_THROWS_AS(training::evaluate_bc_loss(stub, data::Dataset{}), std::invalid_argument);
  }

  TEST_CASE("evaluate_bc_loss equals the bc component of the noise-free loss") {
    SplitRng rng(5);
    model::PodnetParams p = model::init_podnet(3, 1, 1, 6, 6, rng);
    const data::Dataset ds = tiny_dataset(4, 9);

    training::Checkpoint ckpt;
    ckpt.config = tiny_config();
    ckpt.config.k = 3;
    ckpt.config.stride = 1;  // identity preprocessing: raw data is the probe batch
    ckpt.config.hidden = 6;
    ckpt.config.mlp_width = 6;
    ckpt.norm = p.norm;
    ckpt.params = p.params;

    const auto batch = model::batch_view(ds);
    model::LossHyper hyper;
    hyper.beta = 0.0;
    hyper.horizon = 1;
    const model::LossBreakdown loss = model::compute_loss(p, batch, hyper, model::zero_noise(batch, p.k));
    CHECK(training::evaluate_bc_loss(ckpt, ds) == loss.bc);
  }

  TEST_CASE("the history CSV carries the exact header and one row per epoch") {
    const data::Dataset ds = tiny_dataset(6, 13);
    training::TrainConfig config = tiny_config();
    config.epochs = 3;
    const auto [ckpt, hist] = training::train(ds, config);
    const std::string csv = training::history_to_csv(hist);
    CHECK(csv.rfind("epoch,total,odc,bc,kl,heldout_bc,tau\n", 0) == 0);
    std::size_t lines = 0;
    for (const char c : csv)
      if (c == '\n') ++lines;
    CHECK(lines == 4);

    const std::string path = temp_path("history.csv");
    training::save_history(hist, path);
    CHECK(jsonio::read_file(path) == csv);
  }

  TEST_CASE("checkpoints round trip through JSON without disturbing the loss") {
    const data::Dataset ds = tiny_dataset(8, 17);
    training::TrainConfig config = tiny_config();
    config.kl_mode = model::KlMode::kMarginal;
    config.kl_sign = -1.0;
    const auto [ckpt, hist] = training::train(ds, config);

    const std::string path = temp_path("ckpt.json");
    training::save_checkpoint(ckpt, path);
    const training::Checkpoint loaded = training::load_checkpoint(path);

    CHECK(loaded.version == ckpt.version);
    CHECK(loaded.config.k == config.k);
    CHECK(loaded.config.kl_mode == config.kl_mode);
    CHECK(loaded.config.kl_sign == config.kl_sign);
    CHECK(loaded.config.seed == config.seed);
    CHECK(loaded.norm.mean == ckpt.norm.mean);

    const data::Dataset probe =
        data::apply_normalization(data::downsample(ds, config.stride), ckpt.norm);
    const auto batch = model::batch_view(probe);
    model::LossHyper hyper;
    hyper.horizon = config.horizon;
    const auto noise = model::zero_noise(batch, config.k);
    const double a = model::compute_loss(training::model_from_checkpoint(ckpt), batch, hyper, noise).total;
    const double b = model::compute_loss(training::model_from_checkpoint(loaded), batch, hyper, noise).total;
    CHECK(std::abs(a - b) < 1e-12);
    CHECK(a == b);  // 17 significant digits reproduce every double exactly

    // saving the loaded checkpoint again is byte-stable
    const std::string path2 = temp_path("ckpt2.json");
    training::save_checkpoint(loaded, path2);
    CHECK(jsonio::read_file(path) == jsonio::read_file(path2));
  }

  TEST_CASE("load_checkpoint rejects malformed documents") {
    const data::Dataset ds = tiny_dataset(5, 3);
    const auto [ckpt, hist] = training::train(ds, tiny_config());
    const std::string path = temp_path("bad.json");

    auto mutate = [&](auto&& edit) {
      nlohmann::json j = nlohmann::json::parse(training::checkpoint_to_json(ckpt));
      edit(j);
      jsonio::write_file(path, j.dump());
    };

    mutate([](nlohmann::json& j) { j["version"] = 2; });
    try {
      training::load_checkpoint(path);
      FAIL("expected a version error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }

    mutate([](nlohmann::json& j) { j["params"]["policy.l0.b"]["data"].push_back(0.0); });
    try {
      training::load_checkpoint(path);
      FAIL("expected a length error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("policy.l0.b") != std::string::npos);
      CHECK(std::string(e.what()).find("shape") != std::string::npos);
    }

    mutate([](nlohmann::json& j) { j["params"].erase("dynamics.l1.W"); });
    CHECK_THROWS_AS(training::load_checkpoint(path), std::invalid_argument);

    mutate([](nlohmann::json& j) { j["debug"] = true; });
    try {
      training::load_checkpoint(path);
      FAIL("expected an unknown-key error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("debug") != std::string::npos);
    }
  }

  TEST_CASE("a degenerate discovery range returns its only candidate") {
    const data::Dataset ds = tiny_dataset(6, 41);
    training::TrainConfig config = tiny_config();
    config.k = 2;
    config.epochs = 2;
    const training::DiscoveryResult result = training::discover_num_options(ds, config, 2, 2);
    CHECK(result.k_best == 2);
    REQUIRE(result.table.size() == 1);
    CHECK(result.table[0].k == 2);
  }

  TEST_CASE("discovery trains each candidate once and returns the table minimum") {
    const data::Dataset ds = tiny_dataset(8, 41);
    training::TrainConfig config = tiny_config();
    config.epochs = 2;
    const training::DiscoveryResult result = training::discover_num_options(ds, config, 2, 4);

    REQUIRE(!result.table.empty());
    CHECK(result.table.size() <= 3);
    std::set<std::size_t> seen;
    for (const auto& row : result.table) {
      CHECK(row.k >= 2);
      CHECK(row.k <= 4);
      CHECK(seen.insert(row.k).second);  // each candidate exactly once
    }
    CHECK(seen.count(config.k) == 1);

    double best = result.table[0].heldout_bc;
    for (const auto& row : result.table) best = std::min(best, row.heldout_bc);
    for (const auto& row : result.table)
      if (row.k == result.k_best) CHECK(row.heldout_bc == best);
  }

  TEST_CASE("discovery rejects an invalid range") {
    const data::Dataset ds = tiny_dataset(4, 1);
    training::TrainConfig config = tiny_config();
    CHECK_THROWS_AS(training::discover_num_options(ds, config, 1, 4), std::invalid_argument);
    CHECK_THROWS_AS(training::discover_num_options(ds, config, 4, 2), std::invalid_argument);
    config.k = 5;
    CHECK_THROWS_AS(training::discover_num_options(ds, config, 2, 4), std::invalid_argument);
  }

  TEST_CASE("a stronger KL weight keeps the posterior closer to uniform") {
    double with_kl = 0.0, without_kl = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const data::Dataset ds = tiny_dataset(12, 100 + seed);
      training::TrainConfig config = tiny_config();
      config.epochs = 30;
      config.lr = 1e-2;
      config.seed = seed;
      config.beta = 1.0;
      with_kl += mean_posterior_entropy(training::train(ds, config).first, ds);
      config.beta = 0.0;
      without_kl += mean_posterior_entropy(training::train(ds, config).first, ds);
    }
    CHECK(with_kl >= without_kl);
  }
}
