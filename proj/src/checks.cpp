#include "protocad/checks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include "protocad/behavior.hpp"
#include "protocad/proto_context.hpp"
#include "protocad/trainer.hpp"
#include "protocad/world_model.hpp"

namespace protocad {

bool CheckReport::ok() const {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

void CheckReport::add(std::string suite, std::string property, double observed, double expected,
                      double tolerance) {
  const bool pass = std::isfinite(observed) && std::abs(observed - expected) <= tolerance;
  results.push_back({std::move(suite), std::move(property), pass, observed, expected, tolerance});
}

void CheckReport::add_flag(std::string suite, std::string property, bool holds) {
  results.push_back({std::move(suite), std::move(property), holds, holds ? 1.0 : 0.0, 1.0, 0.0});
}

std::string CheckReport::table() const {
  std::map<std::string, std::pair<int, int>> suites;  // passed, total
  std::vector<std::string> order;
  for (const auto& r : results) {
    if (!suites.count(r.suite)) order.push_back(r.suite);
    auto& [p, n] = suites[r.suite];
    p += r.pass ? 1 : 0;
    ++n;
  }
  std::ostringstream os;
  os << std::left << std::setw(22) << "suite" << std::setw(10) << "passed" << "status\n";
  for (const auto& s : order) {
    const auto [p, n] = suites[s];
    os << std::setw(22) << s << std::setw(10) << (std::to_string(p) + "/" + std::to_string(n))
       << (p == n ? "ok" : "FAIL") << '\n';
  }
  for (const auto& r : results) {
    if (r.pass) continue;
    os << "FAIL " << r.suite << ": " << r.property << " observed=" << std::setprecision(12)
       << r.observed << " expected=" << r.expected << " tolerance=" << r.tolerance << '\n';
  }
  return os.str();
}

GradCheck gradcheck(const std::function<Tensor()>& loss_fn, std::span<const Tensor> params,
                    double step) {
  std::vector<Tensor> ps(params.begin(), params.end());
  for (auto& p : ps) p.clear_grad();
  loss_fn().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : ps) {
    std::vector<double> g(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), g.begin());
    analytic.push_back(std::move(g));
  }
  GradCheck out;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto data = ps[i].mutable_data();
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t j = 0; j < data.size(); ++j) {
      const Scalar v = data[j];
      data[j] = static_cast<Scalar>(v + step);
      const double fp = loss_fn().item();
      data[j] = static_cast<Scalar>(v - step);
      const double fm = loss_fn().item();
      data[j] = v;
      const double num = (fp - fm) / (2 * step);
      diff2 += (analytic[i][j] - num) * (analytic[i][j] - num);
      a2 += analytic[i][j] * analytic[i][j];
      n2 += num * num;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    const double rel = denom < 1e-12 ? 0.0 : std::sqrt(diff2) / denom;
    if (out.worst.empty() || rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst = "param " + std::to_string(i);
    }
  }
  for (auto& p : ps) p.clear_grad();
  return out;
}

namespace {

constexpr double kGradTol = 1e-4;

Tensor random_tensor(Rng& rng, Shape shape, double lo, double hi, bool requires_grad = true) {
  std::vector<Scalar> v(numel_of(shape));
  for (auto& x : v) x = static_cast<Scalar>(rng.uniform(lo, hi));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// A miniature agent with every width at most 8.
struct Tiny {
  WorldModelConfig wcfg;
  ProtoConfig pcfg;
  AgentConfig acfg;
  ParamSet world{"world"}, projector{"projector"}, target{"target_projector"}, protos{"prototypes"},
      actor_p{"actor"}, critic_p{"critic"};
  std::unique_ptr<WorldModel> model;
  std::unique_ptr<ProtoContext> proto;
  std::unique_ptr<Actor> actor;
  std::unique_ptr<Critic> critic;
  Ablation mode;

  // Batch data, time-major.
  std::size_t B = 2, M = 4;
  std::vector<Tensor> obs, acts;
  Tensor rew;

  explicit Tiny(std::uint64_t seed, Ablation m = Ablation::full) : mode(m) {
    wcfg.obs_dim = 3;
    wcfg.act_dim = 2;
    wcfg.h_dim = 5;
    wcfg.z_dim = 3;
    wcfg.hidden = 8;
    wcfg.depth = 1;
    pcfg.num_prototypes = 3;
    pcfg.dim = 4;
    acfg.hidden = 8;
    acfg.depth = 1;
    acfg.horizon = 3;
    wcfg.feature_dim = feature_dim(wcfg.h_dim + wcfg.z_dim, pcfg.dim, mode);
    Rng rng(seed);
    model = std::make_unique<WorldModel>(wcfg, world, rng);
    proto = std::make_unique<ProtoContext>(pcfg, model->state_dim(), projector, target, protos, rng);
    actor = std::make_unique<Actor>(acfg, wcfg.feature_dim, wcfg.act_dim, actor_p, rng);
    critic = std::make_unique<Critic>(acfg, wcfg.feature_dim, critic_p, rng);
    for (std::size_t t = 0; t < M; ++t) {
      obs.push_back(random_tensor(rng, {B, wcfg.obs_dim}, -1, 1, false));
      acts.push_back(random_tensor(rng, {B, wcfg.act_dim}, -1, 1, false));
    }
    rew = random_tensor(rng, {M * B, 1}, 0, 1, false);
  }

  WorldModel::Rollout rollout() const {
    NoiseTape noise(11);
    return model->observe_sequence(obs, acts, model->initial(B), noise);
  }
  std::vector<Tensor> params(std::initializer_list<const ParamSet*> groups) const {
    std::vector<Tensor> out;
    for (const ParamSet* g : groups)
      for (const auto& e : g->entries()) out.push_back(e.tensor);
    return out;
  }
};

}  // namespace

void check_primitive_gradients(CheckReport& report, std::uint64_t seed) {
  Rng rng(seed);
  const std::string suite = "gradcheck/primitives";
  auto run = [&](const std::string& name, std::vector<Tensor> inputs,
                 const std::function<Tensor(const std::vector<Tensor>&)>& f) {
    const Tensor probe = [&] {
      NoGradGuard ng;
      return f(inputs);
    }();
    const Tensor weights = random_tensor(rng, probe.shape(), -1, 1, false);
    const auto g = gradcheck([&] { return sum(mul(f(inputs), weights)); }, inputs);
    report.add(suite, name + " relative error", g.max_rel_error, 0.0, kGradTol);
  };
  auto unary_as = [&](const std::string& label, const std::string& op, double lo, double hi,
                      PrimitiveAttrs attrs) {
    run(label, {random_tensor(rng, {3, 4}, lo, hi)},
        [op, attrs](const std::vector<Tensor>& in) { return apply_primitive(op, in, attrs); });
  };
  auto unary = [&](const std::string& op, double lo, double hi, PrimitiveAttrs attrs = {}) {
    unary_as(op, op, lo, hi, attrs);
  };
  for (const char* op : {"add", "sub", "mul"}) {
    for (const Shape& sb : {Shape{3, 4}, Shape{1, 4}, Shape{3, 1}, Shape{1, 1}}) {
      run(std::string(op) + " " + shape_str(sb),
          {random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, sb, -1, 1)},
          [op](const std::vector<Tensor>& in) { return apply_primitive(op, in); });
    }
  }
  run("div", {random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {3, 4}, 0.5, 2)},
      [](const std::vector<Tensor>& in) { return div(in[0], in[1]); });
  run("matmul", {random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {4, 2}, -1, 1)},
      [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); });
  run("concat axis 0", {random_tensor(rng, {2, 4}, -1, 1), random_tensor(rng, {3, 4}, -1, 1)},
      [](const std::vector<Tensor>& in) { return concat(in, 0); });
  run("concat axis 1", {random_tensor(rng, {3, 2}, -1, 1), random_tensor(rng, {3, 4}, -1, 1)},
      [](const std::vector<Tensor>& in) { return concat(in, 1); });
  unary("transpose", -1, 1);
  unary("tanh", -2, 2);
  unary("elu", -2, 2);
  unary("softplus", -2, 2);
  unary("exp", -1, 1);
  unary("log", 0.5, 2);
  unary("square", -1, 1);
  for (int axis : {0, 1, -1}) {
    PrimitiveAttrs a;
    a.axis = axis;
    unary_as("sum axis " + std::to_string(axis), "sum", -1, 1, a);
    unary_as("mean axis " + std::to_string(axis), "mean", -1, 1, a);
  }
  {
    PrimitiveAttrs a;
    a.axis = 1;
    unary("l2_normalize", -1, 1, a);
    a.temperature = 0.5;
    unary_as("softmax T=0.5", "softmax", -1, 1, a);
    a.axis = 0;
    unary_as("softmax axis 0", "softmax", -1, 1, a);
    PrimitiveAttrs s;
    s.axis = 1;
    s.begin = 1;
    s.end = 3;
    unary("slice", -1, 1, s);
    PrimitiveAttrs c;
    c.value = 0;
    // Values kept away from the kink.
    run("clamp_min", {random_tensor(rng, {3, 4}, 0.1, 1)}, [](const std::vector<Tensor>& in) {
      return clamp_min(sub(in[0], Tensor::scalar(0.55)), 0);
    });
  }
  {
    Tensor x = random_tensor(rng, {3, 4}, -1, 1);
    sum(mul(stop_gradient(x), x)).backward();
    double dev = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) dev = std::max(dev, std::abs(x.grad()[i] - x.data()[i]));
    report.add(suite, "stop_gradient blocks one branch", dev, 0.0, 0.0);
  }
}

void check_loss_gradients(CheckReport& report, std::uint64_t seed) {
  const std::string suite = "gradcheck/losses";
  Tiny tiny(seed);
  const auto world_params = tiny.params({&tiny.world});
  const auto ctx_params = tiny.params({&tiny.world, &tiny.projector, &tiny.protos});

  // Free-nats floor set between two per-sample KL values so both branches occur.
  double floor = 0;
  {
    NoGradGuard ng;
    const auto roll = tiny.rollout();
    std::vector<double> kls;
    for (std::size_t t = 0; t < roll.posteriors.size(); ++t) {
      const Tensor k = kl_divergence(roll.posteriors[t], roll.priors[t]);
      kls.insert(kls.end(), k.data().begin(), k.data().end());
    }
    std::sort(kls.begin(), kls.end());
    floor = 0.5 * (kls[kls.size() / 2 - 1] + kls[kls.size() / 2]);
  }
  const auto kl = gradcheck(
      [&] {
        const auto roll = tiny.rollout();
        return kl_objective(roll.posteriors, roll.priors, 1.0, floor);
      },
      world_params);
  report.add(suite, "KL with free-nats floor", kl.max_rel_error, 0.0, kGradTol);

  const auto obs = gradcheck(
      [&] {
        const auto roll = tiny.rollout();
        const Tensor s = stack_states(roll.states).features();
        const auto c = tiny.proto->context(s);
        return unit_gaussian_nll(tiny.model->decode_obs(build_feature(s, c.u, c.e, tiny.mode)),
                                 concat(tiny.obs, 0));
      },
      ctx_params);
  report.add(suite, "observation log-likelihood", obs.max_rel_error, 0.0, kGradTol);

  const auto rew = gradcheck(
      [&] {
        const auto roll = tiny.rollout();
        return unit_gaussian_nll(tiny.model->predict_reward(stack_states(roll.states).features()),
                                 tiny.rew);
      },
      world_params);
  report.add(suite, "reward log-likelihood", rew.max_rel_error, 0.0, kGradTol);

  // Sinkhorn targets are constants of the loss.
  Tensor target;
  {
    NoGradGuard ng;
    const Tensor s = stack_states(tiny.rollout().states).features();
    target = sinkhorn_assign(tiny.proto->project(s, ProtoContext::Branch::target),
                             tiny.proto->prototypes(), 0.05, 3);
  }
  for (Pairing pairing : {Pairing::crossed, Pairing::aligned}) {
    const auto tc = gradcheck(
        [&] {
          const Tensor s = stack_states(tiny.rollout().states).features();
          return temporal_crossover_loss(tiny.proto->context(s).w, target, tiny.M, pairing);
        },
        ctx_params);
    report.add(suite, pairing == Pairing::crossed ? "temporal crossover loss" : "aligned SwAV loss",
               tc.max_rel_error, 0.0, kGradTol);
  }

  RssmState start;
  {
    NoGradGuard ng;
    start = stack_states(tiny.rollout().states).detached();
  }
  const auto actor = gradcheck(
      [&] {
        NoiseTape noise(23);
        const auto traj = imagine(*tiny.model, *tiny.proto, *tiny.actor, *tiny.critic, start,
                                  tiny.acfg.horizon, tiny.mode, noise);
        return actor_objective(lambda_returns<Tensor>(traj.rewards, traj.values, 0.9, 0.8));
      },
      tiny.params({&tiny.actor_p}));
  report.add(suite, "actor objective", actor.max_rel_error, 0.0, kGradTol);

  std::vector<Tensor> feats, rets;
  {
    NoGradGuard ng;
    NoiseTape noise(23);
    const auto traj = imagine(*tiny.model, *tiny.proto, *tiny.actor, *tiny.critic, start,
                              tiny.acfg.horizon, tiny.mode, noise);
    feats = traj.features;
    rets = lambda_returns<Tensor>(traj.rewards, traj.values, 0.9, 0.8);
  }
  const auto critic = gradcheck([&] { return critic_objective(feats, rets, *tiny.critic); },
                                tiny.params({&tiny.critic_p}));
  report.add(suite, "critic objective", critic.max_rel_error, 0.0, kGradTol);
}

void check_lambda_returns(CheckReport& report, std::uint64_t seed) {
  const std::string suite = "lambda_returns";
  Rng rng(seed);
  double worst = 0, worst_l1 = 0, worst_l0 = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t H = 1 + rng.index(5);
    std::vector<double> r(H + 1), v(H + 1);
    for (auto& x : r) x = rng.uniform(-2, 2);
    for (auto& x : v) x = rng.uniform(-10, 10);
    const double gamma = rng.uniform(0.5, 0.999);
    const double lambda = rng.uniform(0, 1);
    // n-step estimate from tau, truncated at H: sum of discounted rewards plus bootstrap.
    auto vn = [&](std::size_t tau, std::size_t n) {
      const std::size_t h = std::min(tau + n, H);
      double acc = 0;
      for (std::size_t k = tau; k < h; ++k) acc += std::pow(gamma, double(k - tau)) * r[k];
      return acc + std::pow(gamma, double(h - tau)) * v[h];
    };
    auto horner = [&](std::size_t tau, std::size_t n) {
      const std::size_t h = std::min(tau + n, H);
      double acc = v[h];
      for (std::size_t k = h; k-- > tau;) acc = r[k] + acc * gamma;
      return acc;
    };
    const auto rec = lambda_returns<double>(r, v, gamma, lambda);
    const auto rec1 = lambda_returns<double>(r, v, gamma, 1.0);
    const auto rec0 = lambda_returns<double>(r, v, gamma, 0.0);
    for (std::size_t tau = 0; tau < H; ++tau) {
      double explicit_sum = 0;
      for (std::size_t n = 1; n <= H - 1; ++n)
        explicit_sum += (1 - lambda) * std::pow(lambda, double(n - 1)) * vn(tau, n);
      explicit_sum += std::pow(lambda, double(H - 1)) * vn(tau, H);
      worst = std::max(worst, std::abs(rec[tau] - explicit_sum));
      worst_l1 = std::max(worst_l1, std::abs(rec1[tau] - horner(tau, H)));
      worst_l0 = std::max(worst_l0, std::abs(rec0[tau] - horner(tau, 1)));
    }
  }
  report.add(suite, "recursion vs explicit sum, 1000 draws, H<=5", worst, 0.0, 1e-10);
  report.add(suite, "lambda=1 equals n-step H return", worst_l1, 0.0, 0.0);
  report.add(suite, "lambda=0 equals one-step return", worst_l0, 0.0, 0.0);

  // H=3, r=(1,1,1), v=0 except v(3)=10, gamma=0.9, lambda=0.95.
  const std::vector<double> r{1, 1, 1, 0}, v{0, 0, 0, 10};
  const double g = 0.9, l = 0.95;
  const double v1 = 1 + g * 0, v2 = 1 + g * 1 + g * g * 0, v3 = 1 + g + g * g + g * g * g * 10;
  const double expected = (1 - l) * (v1 + l * v2) + l * l * v3;
  report.add(suite, "worked example H=3", lambda_returns<double>(r, v, g, l)[0], expected, 1e-12);
}

void check_sinkhorn(CheckReport& report, std::uint64_t seed) {
  const std::string suite = "sinkhorn";
  Rng rng(seed);
  auto marginals = [](const Tensor& q) {
    std::vector<double> rows(q.rows(), 0.0), cols(q.cols(), 0.0);
    for (std::size_t i = 0; i < q.rows(); ++i)
      for (std::size_t j = 0; j < q.cols(); ++j) {
        rows[i] += q.at(i, j);
        cols[j] += q.at(i, j);
      }
    return std::pair{rows, cols};
  };
  auto max_dev = [](const std::vector<double>& xs, double target) {
    double d = 0;
    for (double x : xs) d = std::max(d, std::abs(x - target));
    return d;
  };
  double col_dev = 0, row_dev = 0, row_dev3 = 0, col_dev_long = 0;
  for (int trial = 0; trial < 20; ++trial) {
    // Fixed point on raw random scores.
    std::vector<Scalar> sv(64 * 8);
    for (auto& x : sv) x = static_cast<Scalar>(rng.normal());
    const auto [r50, c50] = marginals(sinkhorn_scores(Tensor::from({64, 8}, sv), 1.0, 50));
    col_dev = std::max(col_dev, max_dev(c50, 64.0 / 8.0));
    row_dev = std::max(row_dev, max_dev(r50, 1.0));

    // Training settings on unit-norm projections and prototypes.
    const Tensor u = l2_normalize(random_tensor(rng, {64, 8}, -1, 1, false), 1);
    const Tensor c = l2_normalize(random_tensor(rng, {8, 8}, -1, 1, false), 1);
    row_dev3 = std::max(row_dev3, max_dev(marginals(sinkhorn_assign(u, c, 0.05, 3)).first, 1.0));
    col_dev_long = std::max(col_dev_long,
                            max_dev(marginals(sinkhorn_assign(u, c, 0.05, 2000)).second, 64.0 / 8.0));
  }
  report.add(suite, "iters=50 column sums vs N/K", col_dev, 0.0, 1e-4);
  report.add(suite, "iters=50 row sums vs 1", row_dev, 0.0, 1e-6);
  report.add(suite, "iters=3 eps=0.05 row sums vs 1", row_dev3, 0.0, 1e-6);
  report.add(suite, "eps=0.05 reaches column marginals given 2000 iters", col_dev_long, 0.0, 1e-4);

  Tensor u = random_tensor(rng, {16, 4}, -1, 1);
  Tensor c = random_tensor(rng, {5, 4}, -1, 1);
  const Tensor q = sinkhorn_assign(l2_normalize(u, 1), l2_normalize(c, 1), 0.05, 3);
  const Tensor loss = add(sum(mul(q, random_tensor(rng, {16, 5}, -1, 1, false))), sum(square(u)));
  loss.backward();
  // u receives only the direct square term; c receives nothing.
  double dev = c.has_grad() ? 1.0 : 0.0;
  for (std::size_t i = 0; i < u.numel(); ++i) dev = std::max(dev, std::abs(u.grad()[i] - 2 * u.data()[i]));
  report.add(suite, "targets carry no gradient", dev, 0.0, 0.0);
}

void check_crossover(CheckReport& report) {
  const std::string suite = "crossover";
  const std::size_t K = 2, M = 4;
  // Hand expansion for one sequence (B = 1): first-half targets against
  // second-half predictions and vice versa, averaged over the M target rows.
  auto hand = [&](const std::vector<std::array<double, 2>>& w, const std::vector<std::array<double, 2>>& wt) {
    double acc = 0;
    for (std::size_t tau = 0; tau < M / 2; ++tau)
      for (std::size_t k = 0; k < K; ++k) acc += wt[tau][k] * std::log(w[tau + M / 2][k]);
    for (std::size_t tau = M / 2; tau < M; ++tau)
      for (std::size_t k = 0; k < K; ++k) acc += wt[tau][k] * std::log(w[tau - M / 2][k]);
    return -acc / static_cast<double>(M);
  };
  auto as_tensor = [&](const std::vector<std::array<double, 2>>& rows) {
    std::vector<Scalar> v;
    for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
    return Tensor::from({M, K}, std::move(v));
  };
  const std::vector<std::array<double, 2>> uniform(M, {0.5, 0.5});
  const std::vector<std::array<double, 2>> onehot(M, {1.0, 0.0});
  report.add(suite, "one-hot target, uniform prediction", temporal_crossover_loss(as_tensor(uniform), as_tensor(onehot), M).item(),
             std::log(2.0), 1e-12);
  const std::vector<std::array<double, 2>> w{{0.9, 0.1}, {0.7, 0.3}, {0.2, 0.8}, {0.4, 0.6}};
  const std::vector<std::array<double, 2>> wt{{0.6, 0.4}, {0.1, 0.9}, {0.85, 0.15}, {0.3, 0.7}};
  report.add(suite, "mixed case vs hand expansion",
             temporal_crossover_loss(as_tensor(w), as_tensor(wt), M).item(), hand(w, wt), 1e-12);
  const std::vector<std::array<double, 2>> wc(M, {0.35, 0.65}), wtc(M, {0.8, 0.2});
  const double crossed = temporal_crossover_loss(as_tensor(wc), as_tensor(wtc), M, Pairing::crossed).item();
  const double aligned = temporal_crossover_loss(as_tensor(wc), as_tensor(wtc), M, Pairing::aligned).item();
  report.add(suite, "time-constant sequence equals plain SwAV", crossed, aligned, 0.0);
}

void check_isolation(CheckReport& report, const CheckOptions& options) {
  const std::string suite = "isolation";
  Tiny tiny(options.seed);

  // Reward loss must not reach the projector or the prototypes.
  {
    ParamSet fixture_params("fixture");
    Rng rng(options.seed + 1);
    const nn::Mlp reward_on_x(fixture_params, "reward_on_x", tiny.wcfg.feature_dim, 8, 1, 1, rng);
    const auto roll = tiny.rollout();
    const Tensor s = stack_states(roll.states).features();
    const auto c = tiny.proto->context(s);
    const Tensor x = build_feature(s, c.u, c.e, tiny.mode);
    const Tensor pred = options.broken_reward_wiring ? reward_on_x(x) : tiny.model->predict_reward(s);
    for (auto* g : {&tiny.projector, &tiny.protos}) g->clear_grads();
    unit_gaussian_nll(pred, tiny.rew).backward();
    double proj = 0, protos = 0;
    for (const auto& e : tiny.projector.entries())
      for (Scalar gv : e.tensor.grad()) proj = std::max(proj, std::abs(double(gv)));
    for (const auto& e : tiny.protos.entries())
      for (Scalar gv : e.tensor.grad()) protos = std::max(protos, std::abs(double(gv)));
    report.add(suite, "d(reward loss)/d(projector) is zero", proj, 0.0, 0.0);
    report.add(suite, "d(reward loss)/d(prototypes) is zero", protos, 0.0, 0.0);
    tiny.world.clear_grads();
    for (auto* g : {&tiny.projector, &tiny.protos}) g->clear_grads();
  }

  // Critic loss must not reach the reward head; imagination never uses the posterior.
  {
    RssmState start;
    {
      NoGradGuard ng;
      start = stack_states(tiny.rollout().states).detached();
    }
    const std::size_t posts_before = tiny.model->posterior_calls();
    NoiseTape noise(5);
    const auto traj = imagine(*tiny.model, *tiny.proto, *tiny.actor, *tiny.critic, start, 3, tiny.mode, noise);
    report.add(suite, "imagination calls the posterior", double(tiny.model->posterior_calls() - posts_before), 0.0, 0.0);
    report.add(suite, "H=3 gives 4 features and 3 transitions",
               double(traj.features.size() * 10 + traj.actions.size()), 43.0, 0.0);
    const auto losses = behavior_losses(traj, *tiny.critic, 0.99, 0.95);
    tiny.world.clear_grads();
    losses.critic.backward();
    double rew_grad = 0;
    for (const auto& e : tiny.world.entries())
      if (e.name.rfind("reward/", 0) == 0)
        for (Scalar gv : e.tensor.grad()) rew_grad = std::max(rew_grad, std::abs(double(gv)));
    report.add(suite, "d(critic loss)/d(reward head) is zero", rew_grad, 0.0, 0.0);
    for (auto* g : {&tiny.world, &tiny.projector, &tiny.protos, &tiny.actor_p, &tiny.critic_p}) g->clear_grads();
  }

  // Feature widths per ablation.
  report.add(suite, "dim(x) full = h+z+2D", double(feature_dim(80, 32, Ablation::full)), 144.0, 0.0);
  report.add(suite, "dim(x) no_projection = h+z+D", double(feature_dim(80, 32, Ablation::no_projection)),
             112.0, 0.0);

  // Optimizer partition and prototype norms on a real trainer step.
  TrainConfig cfg;
  cfg.seed = options.seed;
  cfg.episode_length = 24;
  cfg.seq_len = 6;
  cfg.batch_size = 3;
  cfg.world.h_dim = 8;
  cfg.world.z_dim = 4;
  cfg.world.hidden = 16;
  cfg.proto.num_prototypes = 4;
  cfg.proto.dim = 4;
  cfg.agent.hidden = 16;
  cfg.agent.horizon = 4;
  Trainer trainer(cfg);
  Rng rng(options.seed);
  for (int i = 0; i < 2; ++i) {
    const EnvContext ctx = sample_context(trainer.config().task_spec(), Split::train, rng);
    trainer.replay().add(trainer.collect_episode(Policy::random, ctx, rng.next_u64(), rng));
  }
  auto snapshot = [&] {
    std::vector<Scalar> v;
    Agent& ag = trainer.agent();
    for (const ParamSet* g : {&ag.world, &ag.projector, &ag.prototypes})
      for (const auto& e : g->entries()) v.insert(v.end(), e.tensor.data().begin(), e.tensor.data().end());
    return v;
  };
  double norm_dev = 0;
  bool unchanged = true;
  for (int step = 0; step < 3; ++step) {
    RssmState starts;
    trainer.world_model_update(trainer.replay().sample(cfg.batch_size, cfg.seq_len, trainer.rng()), &starts);
    const Tensor& c = trainer.agent().proto->prototypes();
    for (std::size_t k = 0; k < c.rows(); ++k) {
      double ss = 0;
      for (std::size_t j = 0; j < c.cols(); ++j) ss += c.at(k, j) * c.at(k, j);
      norm_dev = std::max(norm_dev, std::abs(std::sqrt(ss) - 1));
    }
    const auto before = snapshot();
    trainer.behavior_update(starts);
    unchanged = unchanged && before == snapshot();
  }
  report.add(suite, "prototype norms after update", norm_dev, 0.0, 1e-6);
  report.add_flag(suite, "behavior update leaves world, projector, prototypes bitwise unchanged", unchanged);
}

CheckReport run_checks(const CheckOptions& options) {
  CheckReport report;
  check_primitive_gradients(report, options.seed);
  check_loss_gradients(report, options.seed);
  check_lambda_returns(report, options.seed);
  check_sinkhorn(report, options.seed);
  check_crossover(report);
  check_isolation(report, options);
  return report;
}

}  // namespace protocad
