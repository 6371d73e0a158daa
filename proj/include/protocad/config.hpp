#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "protocad/behavior.hpp"
#include "protocad/env.hpp"
#include "protocad/optim.hpp"
#include "protocad/proto_context.hpp"
#include "protocad/world_model.hpp"

namespace protocad {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimConfig {
  double world_lr = 3e-4;
  double actor_lr = 8e-5;
  double critic_lr = 8e-5;
  double adam_eps = 1e-5;
  double clip_norm = 100.0;

  AdamConfig world() const { return {world_lr, 0.9, 0.999, adam_eps, clip_norm}; }
  AdamConfig actor() const { return {actor_lr, 0.9, 0.999, adam_eps, clip_norm}; }
  AdamConfig critic() const { return {critic_lr, 0.9, 0.999, adam_eps, clip_norm}; }
};

/// Everything a run needs. Defaults are the desk profile.
struct TrainConfig {
  std::string profile = "desk";
  std::string task = "pendulum_swingup";
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::full;

  std::size_t total_env_steps = 60000;
  std::size_t seed_episodes = 2;
  std::size_t collect_interval = 100;
  std::size_t batch_size = 8;
  std::size_t seq_len = 20;
  int action_repeat = 2;
  int episode_length = 200;
  std::size_t eval_every = 10000;
  std::size_t eval_episodes = 5;
  std::size_t baseline_episodes = 20;
  /// Checkpoint cadence in collected episodes; 0 writes only the final one.
  std::size_t checkpoint_every = 10;
  /// Stop after this many gradient updates (0 = no limit). Useful for smoke runs.
  std::size_t max_updates = 0;

  double augment_lo = 0.8;
  double augment_hi = 1.2;
  bool detach_context_in_decoder = false;

  WorldModelConfig world;
  ProtoConfig proto;
  AgentConfig agent;
  OptimConfig optim;

  /// Optional override of the task's context lists.
  std::optional<ContextLists> contexts;

  TrainConfig();

  /// Env steps per episode: episode_length * action_repeat.
  std::size_t env_steps_per_episode() const {
    return static_cast<std::size_t>(episode_length) * static_cast<std::size_t>(action_repeat);
  }
  TaskSpec task_spec() const;
  /// Fills in derived sizes (obs/act dims, feature width) and checks invariants.
  void finalize();
  void validate() const;
};

/// Desk or paper profile defaults.
TrainConfig profile_config(const std::string& name);

/// Starts from the profile named by the "profile" key (desk when absent) and
/// applies every other key. Unknown keys and wrong types raise ConfigError
/// naming the key path.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);
/// Every field materialized.
nlohmann::json config_to_json(const TrainConfig& cfg);

}  // namespace protocad
