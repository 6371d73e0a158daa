#include "protocad/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace protocad {

namespace {

constexpr double kGravity = 10.0;
constexpr double kLength = 1.0;
constexpr double kMaxTorque = 2.0;
constexpr double kMaxSpeed = 8.0;
constexpr double kSpring = 1.0;
constexpr double kBaseDamping = 0.5;
constexpr double kTarget = 1.0;

}  // namespace

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "' (expected train or test)");
}

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names = {"pendulum_swingup", "msd_reach"};
  return names;
}

TaskSpec make_task(const std::string& name) {
  if (name == "pendulum_swingup") {
    return {TaskKind::pendulum_swingup, name, 3, 1,
            {{0.75, 0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2, 1.25},
             {0.2, 0.4, 0.5, 0.7, 1.3, 1.5, 1.6, 1.8},
             {},
             {}}};
  }
  if (name == "msd_reach") {
    const std::vector<double> train = {0.75, 0.85, 1.00, 1.15, 1.25};
    const std::vector<double> test = {0.2, 0.3, 0.4, 0.5, 1.5, 1.6, 1.7, 1.8};
    return {TaskKind::msd_reach, name, 2, 1, {train, test, train, test}};
  }
  throw std::invalid_argument("unknown task '" + name + "'");
}

EnvContext sample_context(const TaskSpec& task, Split split, Rng& rng) {
  const auto& masses = task.contexts.mass(split);
  if (masses.empty()) throw std::invalid_argument(task.name + ": empty mass list for " + to_string(split));
  EnvContext c;
  c.split = split;
  c.mass_mult = masses[rng.index(masses.size())];
  const auto& damping = task.contexts.damping(split);
  c.damping_mult = damping.empty() ? 1.0 : damping[rng.index(damping.size())];
  return c;
}

std::vector<EnvContext> context_grid(const TaskSpec& task, Split split) {
  std::vector<EnvContext> grid;
  const auto& damping = task.contexts.damping(split);
  for (double m : task.contexts.mass(split)) {
    if (damping.empty()) {
      grid.push_back({m, 1.0, split});
    } else {
      for (double d : damping) grid.push_back({m, d, split});
    }
  }
  return grid;
}

double wrap_angle(double theta) {
  const double two_pi = 2.0 * std::numbers::pi;
  return theta - two_pi * std::ceil((theta - std::numbers::pi) / two_pi);
}

Env::Env(TaskSpec task, EnvConfig cfg) : task_(std::move(task)), cfg_(cfg) {
  if (cfg_.action_repeat < 1 || cfg_.episode_length < 1 || !(cfg_.dt > 0))
    throw std::invalid_argument("Env: action_repeat, episode_length and dt must be positive");
}

std::vector<double> Env::reset(const EnvContext& context, std::uint64_t seed) {
  if (!(context.mass_mult > 0) || !(context.damping_mult > 0))
    throw std::invalid_argument("Env::reset: context multipliers must be positive");
  context_ = context;
  steps_ = 0;
  Rng rng(seed);
  if (task_.kind == TaskKind::pendulum_swingup) {
    q_ = wrap_angle(std::numbers::pi + rng.uniform(-0.05, 0.05));
    qd_ = rng.uniform(-0.05, 0.05);
  } else {
    q_ = rng.uniform(-0.05, 0.05);
    qd_ = 0.0;
  }
  return observation();
}

std::vector<double> Env::observation() const {
  if (task_.kind == TaskKind::pendulum_swingup) return {std::cos(q_), std::sin(q_), qd_};
  return {q_, qd_};
}

double Env::substep(double action) {
  const double dt = cfg_.dt;
  const double dt_norm = 1.0 / cfg_.action_repeat;
  if (task_.kind == TaskKind::pendulum_swingup) {
    const double m = context_.mass_mult;
    const double u = kMaxTorque * action;
    const double acc = 3.0 * kGravity / (2.0 * kLength) * std::sin(q_) +
                       3.0 * u / (m * kLength * kLength);
    qd_ = std::clamp(qd_ + dt * acc, -kMaxSpeed, kMaxSpeed);
    q_ = wrap_angle(q_ + dt * qd_);
    return (std::cos(q_) + 1.0) / 2.0 * dt_norm;
  }
  const double m = context_.mass_mult;
  const double d = kBaseDamping * context_.damping_mult;
  const double acc = (action - kSpring * q_ - d * qd_) / m;
  qd_ = qd_ + dt * acc;
  q_ = q_ + dt * qd_;
  return std::exp(-8.0 * (q_ - kTarget) * (q_ - kTarget)) * dt_norm;
}

Transition Env::step(std::span<const double> action) {
  if (action.size() != task_.act_dim)
    throw std::invalid_argument("Env::step: expected " + std::to_string(task_.act_dim) +
                                " action components, got " + std::to_string(action.size()));
  double a = action[0];
  if (!(a >= -1.0 && a <= 1.0)) {
    ++clamp_count_;
    a = std::isnan(a) ? 0.0 : std::clamp(a, -1.0, 1.0);
  }
  Transition tr;
  for (int k = 0; k < cfg_.action_repeat; ++k) tr.reward += substep(a);
  ++steps_;
  tr.observation = observation();
  tr.done = steps_ >= cfg_.episode_length;
  return tr;
}

AugmentedViews augment_views(std::span<const double> obs_sequence, Rng& rng, double lo, double hi) {
  if (!(lo > 0) || lo > hi)
    throw std::invalid_argument("augment_views: need 0 < lo <= hi, got lo=" + std::to_string(lo) +
                                " hi=" + std::to_string(hi));
  AugmentedViews v;
  v.factor1 = lo == hi ? lo : rng.uniform(lo, hi);
  v.factor2 = lo == hi ? lo : rng.uniform(lo, hi);
  v.view1.reserve(obs_sequence.size());
  v.view2.reserve(obs_sequence.size());
  for (double o : obs_sequence) {
    v.view1.push_back(o * v.factor1);
    v.view2.push_back(o * v.factor2);
  }
  return v;
}

}  // namespace protocad
