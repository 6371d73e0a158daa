#include "protocad/behavior.hpp"

#include <algorithm>

namespace protocad {

void AgentConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("AgentConfig: horizon must be >= 1");
  if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("AgentConfig: gamma must lie in (0, 1)");
  if (!(lambda >= 0 && lambda <= 1)) throw std::invalid_argument("AgentConfig: lambda must lie in [0, 1]");
  if (!(expl_noise >= 0)) throw std::invalid_argument("AgentConfig: expl_noise must be >= 0");
}

Actor::Actor(const AgentConfig& cfg, std::size_t feature_dim, std::size_t act_dim, ParamSet& params,
             Rng& rng)
    : act_dim_(act_dim), net_(params, "actor", feature_dim, cfg.hidden, cfg.depth, 2 * act_dim, rng) {}

ActionDist Actor::dist(const Tensor& x) const { return {DiagGaussian::from_params(net_(x))}; }

Critic::Critic(const AgentConfig& cfg, std::size_t feature_dim, ParamSet& params, Rng& rng)
    : net_(params, "critic", feature_dim, cfg.hidden, cfg.depth, 1, rng) {}

Tensor Critic::value(const Tensor& x) const { return net_(x); }

ImaginedTrajectory imagine(const WorldModel& model, const ProtoContext& proto, const Actor& actor,
                           const Critic& critic, const RssmState& start, std::size_t horizon,
                           Ablation mode, NoiseTape& noise) {
  ImaginedTrajectory traj;
  RssmState state = start;
  for (std::size_t t = 0; t <= horizon; ++t) {
    const Tensor s = state.features();
    const Tensor x = proto.feature(s, mode);
    traj.states.push_back(state);
    traj.features.push_back(x);
    traj.rewards.push_back(model.predict_reward(s));
    traj.values.push_back(critic.value(x));
    if (t == horizon) break;
    const Tensor a = actor.dist(x).sample(noise.normal(x.rows(), actor.act_dim()));
    traj.actions.push_back(a);
    state = model.imagine_step(state, a, noise);
  }
  return traj;
}

Tensor actor_objective(std::span<const Tensor> returns) {
  return scale(mean(sum(concat(returns, 1), 1)), -1);
}

Tensor critic_objective(std::span<const Tensor> features, std::span<const Tensor> returns,
                        const Critic& critic) {
  if (features.size() != returns.size())
    throw std::invalid_argument("critic_objective: features and returns differ in length");
  std::vector<Tensor> sq;
  for (std::size_t t = 0; t < returns.size(); ++t) {
    const Tensor v = critic.value(stop_gradient(features[t]));
    sq.push_back(square(sub(v, stop_gradient(returns[t]))));
  }
  return scale(mean(sum(concat(sq, 1), 1)), 0.5);
}

BehaviorLosses behavior_losses(const ImaginedTrajectory& traj, const Critic& critic, double gamma,
                               double lambda) {
  BehaviorLosses out;
  out.returns = lambda_returns<Tensor>(traj.rewards, traj.values, gamma, lambda);
  out.actor = actor_objective(out.returns);
  out.critic = critic_objective(traj.features, out.returns, critic);
  return out;
}

std::vector<double> act(const Actor& actor, const Tensor& x, ActMode mode, double sigma, Rng& rng) {
  NoGradGuard no_grad;
  const ActionDist d = actor.dist(x);
  std::vector<double> a;
  if (mode == ActMode::eval) {
    const Tensor m = d.mode();
    a.assign(m.data().begin(), m.data().end());
    return a;
  }
  std::vector<Scalar> eps(actor.act_dim() * x.rows());
  for (auto& v : eps) v = static_cast<Scalar>(rng.normal());
  const Tensor s = d.sample(Tensor::from({x.rows(), actor.act_dim()}, std::move(eps)));
  for (Scalar v : s.data()) {
    const double noisy = sigma > 0 ? v + sigma * rng.normal() : v;
    a.push_back(std::clamp(noisy, -1.0, 1.0));
  }
  return a;
}

}  // namespace protocad
