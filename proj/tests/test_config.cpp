#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "protocad/config.hpp"

using namespace protocad;
using nlohmann::json;

TEST_CASE("desk profile defaults") {
  TrainConfig c = profile_config("desk");
  c.finalize();
  CHECK(c.batch_size == 8);
  CHECK(c.seq_len == 20);
  CHECK(c.world.h_dim == 64);
  CHECK(c.world.z_dim == 16);
  CHECK(c.proto.num_prototypes == 32);
  CHECK(c.agent.horizon == 10);
  CHECK(c.world.obs_dim == 3);
  CHECK(c.world.feature_dim == 144);
  CHECK(c.env_steps_per_episode() == 400);
}

TEST_CASE("paper profile hyperparameters") {
  TrainConfig c = profile_config("paper");
  c.finalize();
  CHECK(c.optim.world_lr == 3e-4);
  CHECK(c.optim.actor_lr == 8e-5);
  CHECK(c.optim.critic_lr == 8e-5);
  CHECK(c.batch_size == 16);
  CHECK(c.seq_len == 50);
  CHECK(c.action_repeat == 2);
  CHECK(c.agent.gamma == 0.99);
  CHECK(c.agent.horizon == 15);
  CHECK(c.proto.dim == 32);
  CHECK(c.proto.temperature == 0.1);
  CHECK(c.proto.sinkhorn_iters == 3);
  CHECK(c.proto.sinkhorn_eps == 0.05);
  CHECK(c.proto.ema == 0.05);
  CHECK(c.proto.num_prototypes == 100);
  CHECK(c.collect_interval == 100);
  CHECK(c.seed_episodes == 2);
  CHECK_THROWS_AS(profile_config("laptop"), ConfigError);
}

TEST_CASE("unknown keys are named") {
  CHECK_THROWS_WITH_AS(config_from_json(json{{"path", "x"}}), doctest::Contains("path"), ConfigError);
  CHECK_THROWS_WITH_AS(config_from_json(json{{"world_model", {{"h_dimm", 3}}}}),
                       doctest::Contains("h_dimm"), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"batch_size", "eight"}}), ConfigError);
}

TEST_CASE("invalid values are rejected") {
  CHECK_THROWS_AS(config_from_json(json{{"seq_len", 21}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"task", "cartpole"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"ablation", "half"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"augment", {{"lo", 1.3}, {"hi", 1.2}}}}), ConfigError);
}

TEST_CASE("overrides merge onto the selected profile") {
  const TrainConfig c = config_from_json(
      json{{"profile", "paper"}, {"task", "msd_reach"}, {"seed", 5}, {"agent", {{"lambda", 0.9}}}});
  CHECK(c.batch_size == 16);
  CHECK(c.task == "msd_reach");
  CHECK(c.world.obs_dim == 2);
  CHECK(c.seed == 5);
  CHECK(c.agent.lambda == 0.9);
  CHECK(c.agent.gamma == 0.99);
}

TEST_CASE("context list override") {
  const TrainConfig c = config_from_json(json{
      {"contexts", {{"train_mass", {1.0, 1.1}}, {"test_mass", {0.3}}}}});
  const TaskSpec t = c.task_spec();
  CHECK(t.contexts.train_mass == std::vector<double>{1.0, 1.1});
  CHECK(t.contexts.test_mass == std::vector<double>{0.3});
  CHECK_THROWS_AS(config_from_json(json{{"contexts", {{"train_mass", {1.0}}, {"test_mass", {1.0}}}}}),
                  ConfigError);
}

TEST_CASE("serialized config round-trips") {
  TrainConfig c = config_from_json(json{{"profile", "paper"}, {"ablation", "plain_swav"}, {"seed", 3}});
  const json j = config_to_json(c);
  const TrainConfig back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.ablation == Ablation::plain_swav);

  const auto dir = std::filesystem::temp_directory_path() / "protocad_test_config";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "c.json") << j.dump(2);
  CHECK(config_to_json(load_config(dir / "c.json")) == j);
  std::ofstream(dir / "bad.json") << "{not json";
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}
