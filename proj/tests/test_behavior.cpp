#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "protocad/behavior.hpp"

using namespace protocad;

namespace {

struct Fixture {
  ParamSet world{"world"}, projector{"projector"}, target{"target_projector"},
      prototypes{"prototypes"}, actor_params{"actor"}, critic_params{"critic"};
  Rng rng{31};
  WorldModelConfig wcfg = [] {
    WorldModelConfig c;
    c.h_dim = 8;
    c.z_dim = 4;
    c.hidden = 16;
    c.feature_dim = 12 + 2 * 4;
    return c;
  }();
  ProtoConfig pcfg = [] {
    ProtoConfig c;
    c.num_prototypes = 5;
    c.dim = 4;
    return c;
  }();
  AgentConfig acfg = [] {
    AgentConfig c;
    c.horizon = 4;
    c.hidden = 16;
    return c;
  }();
  WorldModel model{wcfg, world, rng};
  ProtoContext proto{pcfg, 12, projector, target, prototypes, rng};
  Actor actor{acfg, 20, 1, actor_params, rng};
  Critic critic{acfg, 20, critic_params, rng};
};

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<Scalar> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({r, c}, v);
}

}  // namespace

TEST_CASE("defaults") {
  const AgentConfig c;
  CHECK(c.horizon == 15);
  CHECK(c.gamma == 0.99);
  CHECK(c.lambda == 0.95);
  CHECK(c.expl_noise == 0.3);
}

TEST_CASE("lambda returns agree with the brute-force expansion") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t H = 1 + rng.index(5);
    std::vector<double> r(H + 1), v(H + 1);
    for (auto& x : r) x = rng.uniform(-2, 2);
    for (auto& x : v) x = rng.uniform(-5, 5);
    const double gamma = rng.uniform(0.5, 1), lambda = rng.uniform(0, 1);
    const auto out = lambda_returns<double>(r, v, gamma, lambda);
    CHECK(std::abs(out[0] - oracle::lambda_return_expanded(r, v, gamma, lambda)) <= 1e-10);
    CHECK(out[H] == v[H]);
  }
}

TEST_CASE("lambda return limits and worked example") {
  const std::vector<double> r = {1, 1, 1, 0}, v = {0, 0, 0, 10};
  const auto mc = lambda_returns<double>(r, v, 0.9, 1.0);
  CHECK(mc[0] == doctest::Approx(1 + 0.9 + 0.81 + 0.729 * 10).epsilon(1e-14));
  const std::vector<double> v2 = {3, -1, 2, 10};
  const auto td = lambda_returns<double>(r, v2, 0.9, 0.0);
  for (std::size_t t = 0; t < 3; ++t) CHECK(td[t] == doctest::Approx(r[t] + 0.9 * v2[t + 1]).epsilon(1e-14));
  const auto ex = lambda_returns<double>(r, v, 0.9, 0.95);
  CHECK(std::abs(ex[0] - oracle::lambda_return_expanded(r, v, 0.9, 0.95)) <= 1e-12);
  const std::vector<double> empty;
  CHECK_THROWS(lambda_returns<double>(empty, empty, 0.9, 0.95));
}

TEST_CASE("actor distribution") {
  Fixture f;
  Rng rng(2);
  const Tensor x = scale(random_tensor(6, 20, rng), 30);
  const ActionDist d = f.actor.dist(x);
  const Tensor mode = d.mode();
  for (Scalar m : mode.data()) {
    CHECK(m > -1);
    CHECK(m < 1);
  }
  const Tensor eps = random_tensor(6, 1, rng);
  const Tensor a = d.sample(eps), b = f.actor.dist(x).sample(eps);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("actor sample gradient matches finite differences") {
  Fixture f;
  Rng rng(3);
  const Tensor x = random_tensor(3, 20, rng);
  const Tensor eps = random_tensor(3, 1, rng);
  auto loss = [&] { return sum(f.actor.dist(x).sample(eps)); };
  for (auto& e : f.actor_params.entries()) {
    e.tensor.clear_grad();
  }
  loss().backward();
  for (auto& e : f.actor_params.entries()) {
    const std::vector<Scalar> g(e.tensor.grad().begin(), e.tensor.grad().end());
    NoGradGuard ng;
    const auto fd = oracle::numeric_grad(e.tensor, [&] { return loss().item(); });
    for (std::size_t i = 0; i < fd.size(); ++i) CHECK(g[i] == doctest::Approx(fd[i]).epsilon(1e-5).scale(1e-3));
  }
}

TEST_CASE("acting") {
  Fixture f;
  Rng rng(4);
  const Tensor x = random_tensor(1, 20, rng);
  Rng r1(5), r2(6);
  CHECK(act(f.actor, x, ActMode::eval, 0.3, r1) == act(f.actor, x, ActMode::eval, 0.3, r2));
  for (int i = 0; i < 500; ++i) {
    const auto a = act(f.actor, scale(x, 10), ActMode::explore, 2.0, rng);
    CHECK(a[0] >= -1);
    CHECK(a[0] <= 1);
  }
  // sigma = 0 is a plain reparameterized sample with the same draws.
  Rng ra(7), rb(7);
  const auto a = act(f.actor, x, ActMode::explore, 0.0, ra);
  const Tensor eps = Tensor::from({1, 1}, {rb.normal()});
  CHECK(a[0] == doctest::Approx(f.actor.dist(x).sample(eps).item()).epsilon(1e-15));
}

TEST_CASE("imagination layout and wiring") {
  Fixture f;
  NoiseTape noise(1);
  RssmState start = f.model.initial(3);
  start.z = Tensor::full({3, 4}, 0.2);
  const std::size_t calls = f.model.posterior_calls();
  for (std::size_t H : {1u, 4u}) {
    const auto traj = imagine(f.model, f.proto, f.actor, f.critic, start, H, Ablation::full, noise);
    CHECK(traj.horizon() == H);
    CHECK(traj.features.size() == H + 1);
    CHECK(traj.rewards.size() == H + 1);
    CHECK(traj.values.size() == H + 1);
    CHECK(traj.features[0].cols() == 20);
  }
  CHECK(f.model.posterior_calls() == calls);

  // Imagined features come from the same feature path used when acting.
  const auto traj = imagine(f.model, f.proto, f.actor, f.critic, start, 2, Ablation::full, noise);
  const Tensor again = f.proto.feature(traj.states[1].features(), Ablation::full);
  CHECK(std::equal(again.data().begin(), again.data().end(), traj.features[1].data().begin()));
}

TEST_CASE("behavior losses") {
  Fixture f;
  NoiseTape noise(2);
  RssmState start = f.model.initial(2);
  auto traj = imagine(f.model, f.proto, f.actor, f.critic, start, 3, Ablation::full, noise);
  const auto losses = behavior_losses(traj, f.critic, 0.99, 0.95);
  CHECK(losses.returns.size() == 4);

  // Critic matches the returns exactly -> zero loss.
  std::vector<Tensor> matched;
  for (const auto& x : traj.features) matched.push_back(f.critic.value(x).detach());
  CHECK(critic_objective(traj.features, matched, f.critic).item() == 0);

  // Uniformly larger returns decrease the actor loss.
  std::vector<Tensor> higher;
  for (const auto& v : losses.returns) higher.push_back(v + 1.0);
  CHECK(actor_objective(higher).item() < actor_objective(losses.returns).item());

  // The critic loss reaches neither the world model nor the projector.
  f.world.clear_grads();
  f.projector.clear_grads();
  losses.critic.backward();
  for (const auto& e : f.world.entries()) {
    if (e.tensor.has_grad()) for (Scalar g : e.tensor.grad()) CHECK(g == 0);
  }
  for (const auto& e : f.projector.entries()) {
    if (e.tensor.has_grad()) for (Scalar g : e.tensor.grad()) CHECK(g == 0);
  }
  bool critic_has_grad = false;
  for (const auto& e : f.critic_params.entries()) critic_has_grad |= e.tensor.has_grad();
  CHECK(critic_has_grad);
}

TEST_CASE("zero-weight critic predicts zero") {
  Fixture f;
  for (auto& e : f.critic_params.entries()) std::fill(e.tensor.mutable_data().begin(), e.tensor.mutable_data().end(), 0);
  Rng rng(9);
  const Tensor v = f.critic.value(random_tensor(4, 20, rng));
  for (Scalar x : v.data()) CHECK(x == 0);
}
