#include "protocad/world_model.hpp"

#include <stdexcept>

namespace protocad {

void WorldModelConfig::validate() const {
  if (obs_dim == 0 || act_dim == 0 || h_dim == 0 || z_dim == 0 || hidden == 0 || feature_dim == 0)
    throw std::invalid_argument("WorldModelConfig: all dimensions must be positive");
  if (!(beta >= 0) || !(free_nats >= 0))
    throw std::invalid_argument("WorldModelConfig: beta and free_nats must be non-negative");
}

RssmState RssmState::detached() const {
  return {stop_gradient(h), stop_gradient(z), {stop_gradient(dist.mean), stop_gradient(dist.std)}};
}

RssmState stack_states(std::span<const RssmState> states) {
  std::vector<Tensor> hs, zs, ms, ss;
  for (const auto& s : states) {
    hs.push_back(s.h);
    zs.push_back(s.z);
    ms.push_back(s.dist.mean);
    ss.push_back(s.dist.std);
  }
  return {concat(hs, 0), concat(zs, 0), {concat(ms, 0), concat(ss, 0)}};
}

WorldModel::WorldModel(const WorldModelConfig& cfg, ParamSet& params, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  rnn_input_ = nn::Linear::create(params, "rnn/input", cfg.z_dim + cfg.act_dim, cfg.hidden, rng);
  gru_ = nn::GruCell(params, "rnn/gru", cfg.hidden, cfg.h_dim, rng);
  posterior_net_ = nn::Mlp(params, "posterior", cfg.h_dim + cfg.obs_dim, cfg.hidden, cfg.depth,
                           2 * cfg.z_dim, rng);
  prior_net_ = nn::Mlp(params, "prior", cfg.h_dim, cfg.hidden, cfg.depth, 2 * cfg.z_dim, rng);
  decoder_ = nn::Mlp(params, "decoder", cfg.feature_dim, cfg.hidden, cfg.depth, cfg.obs_dim, rng);
  reward_head_ = nn::Mlp(params, "reward", cfg.h_dim + cfg.z_dim, cfg.hidden, cfg.depth, 1, rng);
}

RssmState WorldModel::initial(std::size_t batch) const {
  return {Tensor::zeros({batch, cfg_.h_dim}), Tensor::zeros({batch, cfg_.z_dim}),
          {Tensor::zeros({batch, cfg_.z_dim}), Tensor::full({batch, cfg_.z_dim}, 1)}};
}

Tensor WorldModel::recurrent_step(const RssmState& prev, const Tensor& action) const {
  if (action.cols() != cfg_.act_dim || action.rows() != prev.batch())
    throw ShapeError("recurrent_step: action " + shape_str(action.shape()) + " vs batch " +
                     std::to_string(prev.batch()) + " x act_dim " + std::to_string(cfg_.act_dim));
  const Tensor x = elu(rnn_input_(concat({prev.z, action}, 1)));
  return gru_(x, prev.h);
}

DiagGaussian WorldModel::posterior(const Tensor& h, const Tensor& obs) const {
  if (obs.cols() != cfg_.obs_dim)
    throw ShapeError("posterior: observation width " + std::to_string(obs.cols()) + ", expected " +
                     std::to_string(cfg_.obs_dim));
  ++posterior_calls_;
  return DiagGaussian::from_params(posterior_net_(concat({h, obs}, 1)));
}

DiagGaussian WorldModel::prior(const Tensor& h) const {
  return DiagGaussian::from_params(prior_net_(h));
}

RssmState WorldModel::observe_step(const RssmState& prev, const Tensor& action, const Tensor& obs,
                                   NoiseTape& noise, DiagGaussian* prior_out) const {
  const Tensor h = recurrent_step(prev, action);
  if (prior_out) *prior_out = prior(h);
  DiagGaussian post = posterior(h, obs);
  const Tensor z = sample_reparameterized(post, noise.normal(h.rows(), cfg_.z_dim));
  return {h, z, post};
}

RssmState WorldModel::imagine_step(const RssmState& prev, const Tensor& action,
                                   NoiseTape& noise) const {
  const Tensor h = recurrent_step(prev, action);
  DiagGaussian pri = prior(h);
  const Tensor z = sample_reparameterized(pri, noise.normal(h.rows(), cfg_.z_dim));
  return {h, z, pri};
}

WorldModel::Rollout WorldModel::observe_sequence(std::span<const Tensor> obs,
                                                 std::span<const Tensor> actions,
                                                 const RssmState& init, NoiseTape& noise) const {
  if (obs.size() != actions.size())
    throw std::invalid_argument("observe_sequence: " + std::to_string(obs.size()) +
                                " observations vs " + std::to_string(actions.size()) + " actions");
  Rollout out;
  RssmState state = init;
  for (std::size_t t = 0; t < obs.size(); ++t) {
    DiagGaussian pri;
    state = observe_step(state, actions[t], obs[t], noise, &pri);
    out.states.push_back(state);
    out.priors.push_back(pri);
    out.posteriors.push_back(state.dist);
  }
  return out;
}

Tensor WorldModel::decode_obs(const Tensor& x) const {
  if (x.cols() != cfg_.feature_dim)
    throw ShapeError("decode_obs: feature width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(cfg_.feature_dim));
  return decoder_(x);
}

Tensor WorldModel::predict_reward(const Tensor& s) const {
  if (s.cols() != state_dim())
    throw ShapeError("predict_reward: input width " + std::to_string(s.cols()) +
                     " is not the latent state width " + std::to_string(state_dim()));
  return reward_head_(s);
}

Tensor WorldModel::kl_objective(std::span<const DiagGaussian> posteriors,
                                std::span<const DiagGaussian> priors) const {
  return protocad::kl_objective(posteriors, priors, cfg_.beta, cfg_.free_nats);
}

Tensor kl_objective(std::span<const DiagGaussian> posteriors, std::span<const DiagGaussian> priors,
                    double beta, double free_nats) {
  if (posteriors.size() != priors.size() || posteriors.empty())
    throw std::invalid_argument("kl_objective: need equal, non-empty posterior/prior lists");
  std::vector<Tensor> per_step;
  for (std::size_t t = 0; t < posteriors.size(); ++t)
    per_step.push_back(kl_divergence(posteriors[t], priors[t]));
  const Tensor kl = concat(per_step, 0);
  return scale(mean(clamp_min(kl, static_cast<Scalar>(free_nats))), static_cast<Scalar>(beta));
}

Tensor unit_gaussian_nll(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape())
    throw ShapeError("unit_gaussian_nll: " + shape_str(prediction.shape()) + " vs " +
                     shape_str(target.shape()));
  return scale(mean(sum(square(sub(prediction, target)), 1)), 0.5);
}

}  // namespace protocad
