#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "protocad/rng.hpp"

namespace protocad {

enum class Split { train, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// Hidden dynamics parameters; fixed for a whole episode.
struct EnvContext {
  double mass_mult = 1.0;
  double damping_mult = 1.0;
  Split split = Split::train;

  bool operator==(const EnvContext&) const = default;
};

/// Declared parameter lists per split. Single-parameter tasks leave the
/// damping lists empty (damping fixed at 1).
struct ContextLists {
  std::vector<double> train_mass;
  std::vector<double> test_mass;
  std::vector<double> train_damping;
  std::vector<double> test_damping;

  const std::vector<double>& mass(Split s) const { return s == Split::train ? train_mass : test_mass; }
  const std::vector<double>& damping(Split s) const {
    return s == Split::train ? train_damping : test_damping;
  }
};

enum class TaskKind { pendulum_swingup, msd_reach };

struct TaskSpec {
  TaskKind kind;
  std::string name;
  std::size_t obs_dim;
  std::size_t act_dim;
  ContextLists contexts;
};

/// Looks up "pendulum_swingup" or "msd_reach"; throws on anything else.
TaskSpec make_task(const std::string& name);
const std::vector<std::string>& task_names();

EnvContext sample_context(const TaskSpec& task, Split split, Rng& rng);
/// Full cartesian grid of the split's parameter values.
std::vector<EnvContext> context_grid(const TaskSpec& task, Split split);

struct Transition {
  std::vector<double> observation;
  double reward = 0;
  bool done = false;
};

struct EnvConfig {
  int action_repeat = 2;
  int episode_length = 200;  // decision steps
  double dt = 0.05;
};

/// One environment instance; the context is set at reset and never changes
/// until the next reset.
class Env {
 public:
  Env(TaskSpec task, EnvConfig cfg = {});

  std::vector<double> reset(const EnvContext& context, std::uint64_t seed);
  /// Applies the action for action_repeat integrator sub-steps. Components
  /// outside [-1, 1] are clamped and counted.
  Transition step(std::span<const double> action);

  const EnvContext& context() const { return context_; }
  const TaskSpec& task() const { return task_; }
  const EnvConfig& config() const { return cfg_; }
  int steps() const { return steps_; }
  int clamp_count() const { return clamp_count_; }
  std::vector<double> observation() const;

  /// Direct state access (pendulum: theta, theta_dot; msd: x, x_dot).
  std::pair<double, double> state() const { return {q_, qd_}; }
  void set_state(double q, double qd) { q_ = q; qd_ = qd; }

  /// One integrator sub-step with an in-range action; returns the
  /// sub-step reward (already scaled by 1 / action_repeat).
  double substep(double action);

 private:
  TaskSpec task_;
  EnvConfig cfg_;
  EnvContext context_;
  double q_ = 0;
  double qd_ = 0;
  int steps_ = 0;
  int clamp_count_ = 0;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// Two amplitude-scaled copies of a sequence: each view multiplies every
/// element by a single factor ~ U(lo, hi) drawn once for the view.
struct AugmentedViews {
  std::vector<double> view1;
  std::vector<double> view2;
  double factor1;
  double factor2;
};
AugmentedViews augment_views(std::span<const double> obs_sequence, Rng& rng, double lo, double hi);

}  // namespace protocad
