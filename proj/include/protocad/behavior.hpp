#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "protocad/gaussian.hpp"
#include "protocad/nn.hpp"
#include "protocad/proto_context.hpp"
#include "protocad/world_model.hpp"

namespace protocad {

struct AgentConfig {
  std::size_t horizon = 15;
  double gamma = 0.99;
  double lambda = 0.95;
  double expl_noise = 0.3;
  std::size_t hidden = 64;
  std::size_t depth = 2;

  void validate() const;
};

/// Tanh-squashed diagonal Gaussian over [-1, 1]^act_dim.
struct ActionDist {
  DiagGaussian base;

  Tensor sample(const Tensor& noise) const { return tanh(sample_reparameterized(base, noise)); }
  Tensor mode() const { return tanh(base.mean); }
};

class Actor {
 public:
  Actor(const AgentConfig& cfg, std::size_t feature_dim, std::size_t act_dim, ParamSet& params,
        Rng& rng);
  ActionDist dist(const Tensor& x) const;
  std::size_t act_dim() const { return act_dim_; }

 private:
  std::size_t act_dim_;
  nn::Mlp net_;
};

class Critic {
 public:
  Critic(const AgentConfig& cfg, std::size_t feature_dim, ParamSet& params, Rng& rng);
  /// v(x) as [N, 1].
  Tensor value(const Tensor& x) const;

 private:
  nn::Mlp net_;
};

/// Backward recursion V(t) = r(t) + gamma * ((1 - lambda) v(t+1) + lambda V(t+1))
/// bootstrapped with V(H) = v(H). rewards and values both have H+1 entries
/// (the last reward is unused); the result has H+1 entries, the last being v(H).
/// Works for plain scalars and for tensors.
template <class T>
std::vector<T> lambda_returns(std::span<const T> rewards, std::span<const T> values, double gamma,
                              double lambda) {
  if (values.empty() || rewards.size() != values.size())
    throw std::invalid_argument("lambda_returns: need aligned, non-empty reward/value sequences");
  const std::size_t n = values.size();
  std::vector<T> out(n);
  out[n - 1] = values[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    const T mix = values[i + 1] * (1.0 - lambda) + out[i + 1] * lambda;
    out[i] = rewards[i] + mix * gamma;
  }
  return out;
}

struct ImaginedTrajectory {
  std::vector<RssmState> states;    // H+1
  std::vector<Tensor> features;     // H+1
  std::vector<Tensor> actions;      // H
  std::vector<Tensor> rewards;      // H+1, from s only
  std::vector<Tensor> values;       // H+1
  std::size_t horizon() const { return actions.size(); }
};

/// Rolls the prior forward H steps from each start state under the actor.
ImaginedTrajectory imagine(const WorldModel& model, const ProtoContext& proto, const Actor& actor,
                           const Critic& critic, const RssmState& start, std::size_t horizon,
                           Ablation mode, NoiseTape& noise);

struct BehaviorLosses {
  Tensor actor;
  Tensor critic;
  std::vector<Tensor> returns;
};

/// -mean_N sum_t V_lambda(t).
Tensor actor_objective(std::span<const Tensor> returns);
/// mean_N sum_t 0.5 (v(sg x_t) - sg V_lambda(t))^2.
Tensor critic_objective(std::span<const Tensor> features, std::span<const Tensor> returns,
                        const Critic& critic);

/// actor = -mean_N sum_t V_lambda(t); critic = mean_N sum_t 0.5 (v(sg x_t) - sg V_lambda(t))^2.
BehaviorLosses behavior_losses(const ImaginedTrajectory& traj, const Critic& critic, double gamma,
                               double lambda);

enum class ActMode { explore, eval };

/// Explore: sample, add N(0, sigma) noise, clamp to [-1, 1]. Eval: tanh(mean).
std::vector<double> act(const Actor& actor, const Tensor& x, ActMode mode, double sigma, Rng& rng);

}  // namespace protocad
