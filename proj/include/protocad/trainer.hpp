#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "protocad/behavior.hpp"
#include "protocad/config.hpp"
#include "protocad/proto_context.hpp"
#include "protocad/replay.hpp"
#include "protocad/world_model.hpp"

namespace protocad {

/// The six parameter groups and the modules built over them. Modules keep
/// references into the groups, so an Agent never moves.
struct Agent {
  explicit Agent(const TrainConfig& cfg);
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  ParamSet world{"world"};
  ParamSet projector{"projector"};
  ParamSet target_projector{"target_projector"};
  ParamSet prototypes{"prototypes"};
  ParamSet actor_params{"actor"};
  ParamSet critic_params{"critic"};

  std::unique_ptr<WorldModel> model;
  std::unique_ptr<ProtoContext> proto;
  std::unique_ptr<Actor> actor;
  std::unique_ptr<Critic> critic;

  std::vector<ParamSet*> groups();
  std::vector<const ParamSet*> groups() const;
};

struct WorldLosses {
  double kl = 0;
  double obs = 0;
  double rew = 0;
  double tc = 0;
  double total = 0;
};

struct BehaviorStats {
  double actor = 0;
  double critic = 0;
};

struct LossSummary {
  WorldLosses world;
  BehaviorStats behavior;
  std::size_t count = 0;
  void add(const WorldLosses& w, const BehaviorStats& b);
  LossSummary mean() const;
};

/// Raised when a loss turns non-finite; the message lists every component.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Policy { random, explore, eval };

/// Per-step view offered to observers during an episode.
struct StepInfo {
  std::size_t step;
  const ProtoContext::Context* context;  // null under the random policy
};

struct EvalSummary {
  Split split = Split::test;
  std::size_t episodes = 0;
  double return_mean = 0;
  double return_std = 0;
  std::vector<double> returns;
  nlohmann::json to_json() const;
};

struct GridRow {
  EnvContext context;
  double return_mean = 0;
  double return_std = 0;
  std::size_t episodes = 0;
};

std::string grid_csv(const std::vector<GridRow>& rows);

/// Drives data collection, the world-model and behavior updates, evaluation
/// and checkpointing. Single-threaded and deterministic given the seed.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  const TrainConfig& config() const { return cfg_; }
  Agent& agent() { return *agent_; }
  const Agent& agent() const { return *agent_; }
  ReplayBuffer& replay() { return replay_; }
  Rng& rng() { return rng_; }

  std::size_t env_steps() const { return env_steps_; }
  std::size_t updates() const { return updates_; }
  std::size_t episodes() const { return episodes_; }

  /// One gradient step on world, projector and prototypes, then the EMA and
  /// prototype renormalization. Detached posterior states are written to
  /// *starts when given.
  WorldLosses world_model_update(const SequenceBatch& batch, RssmState* starts = nullptr);
  /// One actor step and one critic step from imagined rollouts.
  BehaviorStats behavior_update(const RssmState& starts);
  /// Samples a batch and runs both updates back to back.
  std::pair<WorldLosses, BehaviorStats> update();

  EpisodeRecord collect_episode(Policy policy, const EnvContext& context, std::uint64_t env_seed,
                                Rng& rng, const std::function<void(const StepInfo&)>& observer = {}) const;

  /// Eval-mode returns on contexts sampled from the split. Episodes may run
  /// on up to `threads` threads; results do not depend on the thread count.
  EvalSummary evaluate(Split split, std::size_t episodes, std::uint64_t seed, std::size_t threads = 1,
                       Policy policy = Policy::eval) const;
  std::vector<GridRow> evaluate_grid(Split split, std::size_t episodes_per_cell, std::uint64_t seed,
                                     std::size_t threads = 1) const;

  /// Runs training into out_dir until the env-step budget (or max_updates)
  /// is reached, resuming from out_dir/checkpoint.pckp when present.
  void train(const std::filesystem::path& out_dir, std::size_t threads = 1);

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores parameters, optimizer state, rng and counters. The replay
  /// buffer is reloaded from `episode_dir` when given.
  void load_checkpoint(const std::filesystem::path& path,
                       const std::optional<std::filesystem::path>& episode_dir = std::nullopt);

  /// Reads just the stored run configuration.
  static TrainConfig checkpoint_config(const std::filesystem::path& path);

 private:
  void append_metric(const std::filesystem::path& path, nlohmann::json record);

  TrainConfig cfg_;
  TaskSpec task_;
  std::unique_ptr<Agent> agent_;
  ReplayBuffer replay_;
  Rng rng_;
  std::size_t env_steps_ = 0;
  std::size_t updates_ = 0;
  std::size_t episodes_ = 0;
  std::size_t next_eval_ = 0;
  std::uint64_t metrics_bytes_ = 0;
  LossSummary last_losses_;
};

/// Environment variable PROTOCAD_THREADS, clamped to >= 1 (default 1).
std::size_t threads_from_env();

}  // namespace protocad
