#pragma once

#include <atomic>
#include <span>
#include <vector>

#include "protocad/gaussian.hpp"
#include "protocad/nn.hpp"
#include "protocad/optim.hpp"

namespace protocad {

struct WorldModelConfig {
  std::size_t obs_dim = 3;
  std::size_t act_dim = 1;
  std::size_t h_dim = 64;
  std::size_t z_dim = 16;
  std::size_t hidden = 64;
  std::size_t depth = 2;
  /// Width of the latent feature fed to the observation decoder.
  std::size_t feature_dim = 144;
  double beta = 1.0;
  double free_nats = 1.0;

  void validate() const;
};

/// Recurrent state h, stochastic latent z and the distribution z came from.
struct RssmState {
  Tensor h;
  Tensor z;
  DiagGaussian dist;

  /// s = (h, z).
  Tensor features() const { return concat({h, z}, 1); }
  std::size_t batch() const { return h.rows(); }
  RssmState detached() const;
};

/// Stacks per-step states of equal batch along rows (time-major).
RssmState stack_states(std::span<const RssmState> states);

/// RSSM with recurrent, representation (posterior) and transition (prior)
/// modules, plus the observation and reward heads.
class WorldModel {
 public:
  WorldModel(const WorldModelConfig& cfg, ParamSet& params, Rng& init_rng);

  const WorldModelConfig& config() const { return cfg_; }
  std::size_t state_dim() const { return cfg_.h_dim + cfg_.z_dim; }

  RssmState initial(std::size_t batch) const;

  /// h_t = GRU(h_{t-1}, MLP(z_{t-1}, a_{t-1})).
  Tensor recurrent_step(const RssmState& prev, const Tensor& action) const;
  DiagGaussian posterior(const Tensor& h, const Tensor& obs) const;
  DiagGaussian prior(const Tensor& h) const;

  /// One filtering step; the prior at the new h is written to *prior_out.
  RssmState observe_step(const RssmState& prev, const Tensor& action, const Tensor& obs,
                         NoiseTape& noise, DiagGaussian* prior_out = nullptr) const;
  /// One imagination step: z comes from the prior, never the posterior.
  RssmState imagine_step(const RssmState& prev, const Tensor& action, NoiseTape& noise) const;

  struct Rollout {
    std::vector<RssmState> states;
    std::vector<DiagGaussian> priors;
    std::vector<DiagGaussian> posteriors;
  };
  /// actions[t] is the action that led to obs[t].
  Rollout observe_sequence(std::span<const Tensor> obs, std::span<const Tensor> actions,
                           const RssmState& init, NoiseTape& noise) const;

  /// Observation mean from a latent feature x.
  Tensor decode_obs(const Tensor& x) const;
  /// Reward mean [N, 1] from the latent state s only.
  Tensor predict_reward(const Tensor& s) const;

  Tensor kl_objective(std::span<const DiagGaussian> posteriors,
                      std::span<const DiagGaussian> priors) const;

  std::size_t posterior_calls() const { return posterior_calls_; }

 private:
  WorldModelConfig cfg_;
  nn::Linear rnn_input_;
  nn::GruCell gru_;
  nn::Mlp posterior_net_;
  nn::Mlp prior_net_;
  nn::Mlp decoder_;
  nn::Mlp reward_head_;
  mutable std::atomic<std::size_t> posterior_calls_{0};
};

/// beta * mean over (step, sample) of max(free_nats, KL(q || p)).
Tensor kl_objective(std::span<const DiagGaussian> posteriors, std::span<const DiagGaussian> priors,
                    double beta, double free_nats);

/// Negative unit-variance Gaussian log-likelihood without the constant:
/// mean over rows of 0.5 * ||prediction - target||^2.
Tensor unit_gaussian_nll(const Tensor& prediction, const Tensor& target);

}  // namespace protocad
