#include "protocad/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "protocad/serialize.hpp"

namespace protocad {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0x1d1f;
constexpr std::uint64_t kTrainStream = 0x7a11;
constexpr std::uint64_t kBaselineStream = 0xba5e;
constexpr double kDt = 0.05;

Tensor row_tensor(std::span<const float> values) {
  std::vector<Scalar> v(values.begin(), values.end());
  const std::size_t n = v.size();
  return Tensor::from({1, n}, std::move(v));
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size()))};
}

// Runs jobs [0, n) on up to `threads` workers; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

Agent::Agent(const TrainConfig& cfg) {
  Rng init(mix_seed(cfg.seed, kInitStream));
  model = std::make_unique<WorldModel>(cfg.world, world, init);
  proto = std::make_unique<ProtoContext>(cfg.proto, model->state_dim(), projector, target_projector,
                                         prototypes, init);
  actor = std::make_unique<Actor>(cfg.agent, cfg.world.feature_dim, cfg.world.act_dim, actor_params,
                                  init);
  critic = std::make_unique<Critic>(cfg.agent, cfg.world.feature_dim, critic_params, init);
}

std::vector<ParamSet*> Agent::groups() {
  return {&world, &projector, &target_projector, &prototypes, &actor_params, &critic_params};
}

std::vector<const ParamSet*> Agent::groups() const {
  return {&world, &projector, &target_projector, &prototypes, &actor_params, &critic_params};
}

void LossSummary::add(const WorldLosses& w, const BehaviorStats& b) {
  world.kl += w.kl;
  world.obs += w.obs;
  world.rew += w.rew;
  world.tc += w.tc;
  world.total += w.total;
  behavior.actor += b.actor;
  behavior.critic += b.critic;
  ++count;
}

LossSummary LossSummary::mean() const {
  if (count == 0) return *this;
  const double n = static_cast<double>(count);
  LossSummary m;
  m.world = {world.kl / n, world.obs / n, world.rew / n, world.tc / n, world.total / n};
  m.behavior = {behavior.actor / n, behavior.critic / n};
  m.count = count;
  return m;
}

json EvalSummary::to_json() const {
  return json{{"split", to_string(split)},
              {"episodes", episodes},
              {"return_mean", return_mean},
              {"return_std", return_std},
              {"returns", returns}};
}

std::string grid_csv(const std::vector<GridRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "mass_mult,damping_mult,split,return_mean,return_std,episodes\n";
  for (const auto& r : rows)
    os << r.context.mass_mult << ',' << r.context.damping_mult << ',' << to_string(r.context.split)
       << ',' << r.return_mean << ',' << r.return_std << ',' << r.episodes << '\n';
  return os.str();
}

std::size_t threads_from_env() {
  const char* v = std::getenv("PROTOCAD_THREADS");
  if (!v || !*v) return 1;
  try {
    const long n = std::stol(v);
    return n < 1 ? 1 : static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    return 1;
  }
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.finalize();
  task_ = cfg_.task_spec();
  agent_ = std::make_unique<Agent>(cfg_);
  rng_ = Rng(mix_seed(cfg_.seed, kTrainStream));
  next_eval_ = cfg_.eval_every;
}

WorldLosses Trainer::world_model_update(const SequenceBatch& batch, RssmState* starts) {
  Agent& ag = *agent_;
  const std::size_t B = batch.batch, M = batch.seq_len, od = batch.obs_dim, ad = batch.act_dim;
  if (od != cfg_.world.obs_dim || ad != cfg_.world.act_dim)
    throw ShapeError("world_model_update: batch dims do not match the model");

  // Two amplitude-scaled views of each window.
  std::vector<Scalar> view1(batch.obs.size()), view2(batch.obs.size());
  std::vector<double> window(M * od);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < M; ++t)
      for (std::size_t k = 0; k < od; ++k) window[t * od + k] = batch.obs[(t * B + b) * od + k];
    const AugmentedViews views = augment_views(window, rng_, cfg_.augment_lo, cfg_.augment_hi);
    for (std::size_t t = 0; t < M; ++t)
      for (std::size_t k = 0; k < od; ++k) {
        view1[(t * B + b) * od + k] = static_cast<Scalar>(views.view1[t * od + k]);
        view2[(t * B + b) * od + k] = static_cast<Scalar>(views.view2[t * od + k]);
      }
  }
  const std::vector<Scalar> act_values(batch.act.begin(), batch.act.end());
  std::vector<Tensor> obs1, obs2, acts;
  for (std::size_t t = 0; t < M; ++t) {
    auto rows = [&](const std::vector<Scalar>& src, std::size_t width) {
      return Tensor::from({B, width}, std::vector<Scalar>(src.begin() + t * B * width,
                                                          src.begin() + (t + 1) * B * width));
    };
    obs1.push_back(rows(view1, od));
    obs2.push_back(rows(view2, od));
    acts.push_back(rows(act_values, ad));
  }
  const Tensor rewards =
      Tensor::from({M * B, 1}, std::vector<Scalar>(batch.rew.begin(), batch.rew.end()));

  NoiseTape noise(rng_.next_u64());
  const RssmState init = ag.model->initial(B);
  WorldModel::Rollout roll1;
  {
    TraceStage stage("observe");
    roll1 = ag.model->observe_sequence(obs1, acts, init, noise);
  }
  Tensor s_target;
  {
    NoGradGuard no_grad;
    TraceStage stage("observe_target");
    const WorldModel::Rollout roll2 = ag.model->observe_sequence(obs2, acts, init, noise);
    s_target = stack_states(roll2.states).features();
  }

  const RssmState stacked = stack_states(roll1.states);
  const Tensor s = stacked.features();
  ProtoContext::Context ctx;
  Tensor w_target;
  {
    TraceStage stage("context");
    ctx = ag.proto->context(s);
    const Tensor u_target = ag.proto->project(s_target, ProtoContext::Branch::target);
    w_target = sinkhorn_assign(u_target, ag.proto->prototypes(),
                               static_cast<Scalar>(cfg_.proto.sinkhorn_eps), cfg_.proto.sinkhorn_iters);
  }
  const Tensor x = cfg_.detach_context_in_decoder
                       ? build_feature(s, stop_gradient(ctx.u), stop_gradient(ctx.e), cfg_.ablation)
                       : build_feature(s, ctx.u, ctx.e, cfg_.ablation);

  Tensor loss_kl, loss_obs, loss_rew, loss_tc, total;
  {
    TraceStage stage("losses");
    loss_obs = unit_gaussian_nll(ag.model->decode_obs(x), concat(obs1, 0));
    loss_rew = unit_gaussian_nll(ag.model->predict_reward(s), rewards);
    loss_kl = ag.model->kl_objective(roll1.posteriors, roll1.priors);
  }
  const Pairing pairing = cfg_.ablation == Ablation::plain_swav ? Pairing::aligned : Pairing::crossed;
  loss_tc = temporal_crossover_loss(ctx.w, w_target, M, pairing);
  {
    TraceStage stage("losses");
    total = loss_kl + loss_obs + loss_rew + loss_tc;
  }

  WorldLosses out{loss_kl.item(), loss_obs.item(), loss_rew.item(), loss_tc.item(), total.item()};
  if (!std::isfinite(out.kl) || !std::isfinite(out.obs) || !std::isfinite(out.rew) ||
      !std::isfinite(out.tc) || !std::isfinite(out.total)) {
    std::ostringstream os;
    os << "non-finite world-model loss at update " << updates_ << ": kl=" << out.kl
       << " obs=" << out.obs << " rew=" << out.rew << " tcswav=" << out.tc << " total=" << out.total;
    throw NonFiniteLoss(os.str());
  }
  const double parts = out.kl + out.obs + out.rew + out.tc;
  if (std::abs(out.total - parts) > 1e-9)
    throw std::logic_error("world-model loss bookkeeping: total " + std::to_string(out.total) +
                           " != sum of components " + std::to_string(parts));

  total.backward();
  adam_step({&ag.world, &ag.projector, &ag.prototypes}, cfg_.optim.world());
  ag.proto->update_target();
  ag.proto->renormalize_prototypes(rng_);
  if (starts) *starts = stacked.detached();
  return out;
}

BehaviorStats Trainer::behavior_update(const RssmState& starts) {
  Agent& ag = *agent_;
  NoiseTape noise(rng_.next_u64());
  ImaginedTrajectory traj;
  std::vector<Tensor> returns;
  Tensor actor_loss;
  {
    // Only the actor receives gradients from the imagined returns.
    FreezeGuard freeze{&ag.world, &ag.projector, &ag.prototypes, &ag.critic_params};
    TraceStage stage("imagine");
    traj = imagine(*ag.model, *ag.proto, *ag.actor, *ag.critic, starts.detached(),
                   cfg_.agent.horizon, cfg_.ablation, noise);
    returns = lambda_returns<Tensor>(traj.rewards, traj.values, cfg_.agent.gamma, cfg_.agent.lambda);
    actor_loss = actor_objective(returns);
    actor_loss.backward();
  }
  Tensor critic_loss;
  {
    TraceStage stage("critic");
    critic_loss = critic_objective(traj.features, returns, *ag.critic);
  }
  BehaviorStats out{actor_loss.item(), critic_loss.item()};
  if (!std::isfinite(out.actor) || !std::isfinite(out.critic)) {
    std::ostringstream os;
    os << "non-finite behavior loss at update " << updates_ << ": actor=" << out.actor
       << " critic=" << out.critic;
    throw NonFiniteLoss(os.str());
  }
  critic_loss.backward();
  adam_step(ag.actor_params, cfg_.optim.actor());
  adam_step(ag.critic_params, cfg_.optim.critic());
  return out;
}

std::pair<WorldLosses, BehaviorStats> Trainer::update() {
  const SequenceBatch batch = replay_.sample(cfg_.batch_size, cfg_.seq_len, rng_);
  RssmState starts;
  const WorldLosses w = world_model_update(batch, &starts);
  const BehaviorStats b = behavior_update(starts);
  ++updates_;
  return {w, b};
}

EpisodeRecord Trainer::collect_episode(Policy policy, const EnvContext& context,
                                       std::uint64_t env_seed, Rng& rng,
                                       const std::function<void(const StepInfo&)>& observer) const {
  const Agent& ag = *agent_;
  Env env(task_, EnvConfig{cfg_.action_repeat, cfg_.episode_length, kDt});
  EpisodeRecord ep;
  ep.task = task_.name;
  ep.context = context;
  ep.seed = env_seed;
  ep.length = static_cast<std::size_t>(cfg_.episode_length);
  ep.obs_dim = task_.obs_dim;
  ep.act_dim = task_.act_dim;
  ep.obs.reserve((ep.length + 1) * ep.obs_dim);
  ep.act.reserve(ep.length * ep.act_dim);
  ep.rew.reserve(ep.length);

  auto push_obs = [&](const std::vector<double>& o) {
    for (double v : o) ep.obs.push_back(static_cast<float>(v));
  };
  push_obs(env.reset(context, env_seed));

  NoGradGuard no_grad;
  NoiseTape noise(rng.next_u64());
  RssmState state = ag.model->initial(1);
  Tensor prev_action = Tensor::zeros({1, ep.act_dim});
  std::vector<double> action(ep.act_dim);
  for (std::size_t t = 0; t < ep.length; ++t) {
    if (policy == Policy::random) {
      for (auto& a : action) a = rng.uniform(-1.0, 1.0);
      if (observer) observer({t, nullptr});
    } else {
      // The model sees exactly what the replay buffer stores.
      const Tensor o = row_tensor(std::span<const float>(ep.obs).subspan(t * ep.obs_dim, ep.obs_dim));
      state = ag.model->observe_step(state, prev_action, o, noise);
      const Tensor s = state.features();
      const ProtoContext::Context c = ag.proto->context(s);
      const Tensor x = build_feature(s, c.u, c.e, cfg_.ablation);
      if (observer) observer({t, &c});
      action = act(*ag.actor, x, policy == Policy::eval ? ActMode::eval : ActMode::explore,
                   cfg_.agent.expl_noise, rng);
    }
    const Transition tr = env.step(action);
    const std::size_t a0 = ep.act.size();
    for (double a : action) ep.act.push_back(static_cast<float>(a));
    ep.rew.push_back(static_cast<float>(tr.reward));
    push_obs(tr.observation);
    prev_action = row_tensor(std::span<const float>(ep.act).subspan(a0, ep.act_dim));
  }
  return ep;
}

EvalSummary Trainer::evaluate(Split split, std::size_t episodes, std::uint64_t seed,
                              std::size_t threads, Policy policy) const {
  EvalSummary out;
  out.split = split;
  out.episodes = episodes;
  out.returns.assign(episodes, 0.0);
  parallel_for(episodes, threads, [&](std::size_t i) {
    Rng r(mix_seed(seed, i));
    const EnvContext ctx = sample_context(task_, split, r);
    const std::uint64_t env_seed = r.next_u64();
    out.returns[i] = collect_episode(policy, ctx, env_seed, r).total_reward();
  });
  std::tie(out.return_mean, out.return_std) = mean_std(out.returns);
  return out;
}

std::vector<GridRow> Trainer::evaluate_grid(Split split, std::size_t episodes_per_cell,
                                            std::uint64_t seed, std::size_t threads) const {
  const std::vector<EnvContext> grid = context_grid(task_, split);
  std::vector<double> returns(grid.size() * episodes_per_cell);
  parallel_for(returns.size(), threads, [&](std::size_t j) {
    Rng r(mix_seed(seed, j));
    const std::uint64_t env_seed = r.next_u64();
    returns[j] = collect_episode(Policy::eval, grid[j / episodes_per_cell], env_seed, r).total_reward();
  });
  std::vector<GridRow> rows;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const std::vector<double> cell(returns.begin() + c * episodes_per_cell,
                                   returns.begin() + (c + 1) * episodes_per_cell);
    const auto [m, sd] = mean_std(cell);
    rows.push_back({grid[c], m, sd, episodes_per_cell});
  }
  return rows;
}

void Trainer::append_metric(const std::filesystem::path& path, json record) {
  const std::string line = record.dump() + "\n";
  std::ofstream os(path, std::ios::binary | std::ios::app);
  if (!os) throw std::runtime_error("cannot append to " + path.string());
  os.write(line.data(), static_cast<std::streamsize>(line.size()));
  metrics_bytes_ += line.size();
}

namespace {

json metric_record(std::size_t env_step, std::size_t updates, const char* phase, double mean,
                   double stddev, const LossSummary& l) {
  const bool have = l.count > 0;
  const double nan = std::nan("");
  return json{{"env_step", env_step},
              {"updates", updates},
              {"phase", phase},
              {"return_mean", mean},
              {"return_std", stddev},
              {"loss_kl", nullable(have ? l.world.kl : nan)},
              {"loss_obs", nullable(have ? l.world.obs : nan)},
              {"loss_rew", nullable(have ? l.world.rew : nan)},
              {"loss_tcswav", nullable(have ? l.world.tc : nan)},
              {"loss_actor", nullable(have ? l.behavior.actor : nan)},
              {"loss_critic", nullable(have ? l.behavior.critic : nan)}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

}  // namespace

void Trainer::train(const std::filesystem::path& out_dir, std::size_t threads) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path ckpt = out_dir / "checkpoint.pckp";
  const fs::path metrics = out_dir / "metrics.jsonl";
  const fs::path episode_dir = out_dir / "episodes";
  replay_ = ReplayBuffer(episode_dir);
  write_text(out_dir / "resolved-config.json", config_to_json(cfg_).dump(2) + "\n");

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  if (fs::exists(ckpt)) {
    load_checkpoint(ckpt, episode_dir);
    if (fs::exists(metrics)) fs::resize_file(metrics, metrics_bytes_);
    std::clog << "protocad: resumed at env_step " << env_steps_ << ", update " << updates_ << "\n";
  } else {
    fs::remove(metrics);
    metrics_bytes_ = 0;
    // Random-policy reference returns, on a stream separate from training.
    const std::uint64_t base_seed = mix_seed(cfg_.seed, kBaselineStream);
    const EvalSummary base_train =
        evaluate(Split::train, cfg_.baseline_episodes, base_seed, threads, Policy::random);
    const EvalSummary base_test =
        evaluate(Split::test, cfg_.baseline_episodes, base_seed + 1, threads, Policy::random);
    write_text(out_dir / "baseline.json",
               json{{"policy", "random"}, {"train", base_train.to_json()}, {"test", base_test.to_json()}}
                       .dump(2) +
                   "\n");
    for (std::size_t i = 0; i < cfg_.seed_episodes; ++i) {
      const EnvContext ctx = sample_context(task_, Split::train, rng_);
      const std::uint64_t env_seed = rng_.next_u64();
      EpisodeRecord ep = collect_episode(Policy::random, ctx, env_seed, rng_);
      const double ret = ep.total_reward();
      replay_.add(std::move(ep));
      env_steps_ += cfg_.env_steps_per_episode();
      ++episodes_;
      append_metric(metrics, metric_record(env_steps_, updates_, "train", ret, 0.0, LossSummary{}));
    }
  }

  auto budget_left = [&] {
    return env_steps_ < cfg_.total_env_steps && (cfg_.max_updates == 0 || updates_ < cfg_.max_updates);
  };
  while (budget_left()) {
    LossSummary acc;
    for (std::size_t c = 0; c < cfg_.collect_interval; ++c) {
      if (cfg_.max_updates != 0 && updates_ >= cfg_.max_updates) break;
      const auto [w, b] = update();
      acc.add(w, b);
    }
    if (acc.count > 0) last_losses_ = acc.mean();

    const EnvContext ctx = sample_context(task_, Split::train, rng_);
    const std::uint64_t env_seed = rng_.next_u64();
    EpisodeRecord ep = collect_episode(Policy::explore, ctx, env_seed, rng_);
    const double ret = ep.total_reward();
    replay_.add(std::move(ep));
    env_steps_ += cfg_.env_steps_per_episode();
    ++episodes_;
    append_metric(metrics, metric_record(env_steps_, updates_, "train", ret, 0.0, acc.mean()));
    std::clog << "protocad: episode " << episodes_ << " env_step " << env_steps_ << " updates "
              << updates_ << " return " << ret << " elapsed " << elapsed() << "s\n";

    while (env_steps_ >= next_eval_) {
      const std::uint64_t eval_seed = mix_seed(cfg_.seed, next_eval_);
      const EvalSummary tr = evaluate(Split::train, cfg_.eval_episodes, eval_seed, threads);
      const EvalSummary te = evaluate(Split::test, cfg_.eval_episodes, eval_seed + 1, threads);
      append_metric(metrics, metric_record(env_steps_, updates_, "eval_train", tr.return_mean,
                                           tr.return_std, last_losses_));
      append_metric(metrics, metric_record(env_steps_, updates_, "eval_test", te.return_mean,
                                           te.return_std, last_losses_));
      std::clog << "protocad: eval at " << env_steps_ << " train " << tr.return_mean << " test "
                << te.return_mean << "\n";
      next_eval_ += cfg_.eval_every;
    }
    if (cfg_.checkpoint_every != 0 && episodes_ % cfg_.checkpoint_every == 0) save_checkpoint(ckpt);
  }
  save_checkpoint(ckpt);
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  TensorArchive ar;
  json groups = json::array();
  for (const ParamSet* g : agent_->groups()) {
    archive_params(ar, *g);
    groups.push_back(g->group());
  }
  auto& meta = ar.meta();
  meta["groups"] = groups;
  meta["config"] = config_to_json(cfg_);
  meta["task"] = task_.name;
  meta["env_steps"] = env_steps_;
  meta["updates"] = updates_;
  meta["episodes"] = episodes_;
  meta["next_eval"] = next_eval_;
  meta["metrics_bytes"] = metrics_bytes_;
  meta["rng"] = rng_.state();
  const auto& l = last_losses_;
  meta["last_losses"] = {l.world.kl,    l.world.obs,    l.world.rew,     l.world.tc,
                         l.world.total, l.behavior.actor, l.behavior.critic, l.count};
  ar.save(path);
}

void Trainer::load_checkpoint(const std::filesystem::path& path,
                              const std::optional<std::filesystem::path>& episode_dir) {
  const TensorArchive ar = TensorArchive::load(path);
  const json& meta = ar.meta();
  try {
    const std::string task = meta.at("task");
    if (task != task_.name)
      throw CheckpointError("checkpoint " + path.string() + " was trained on task '" + task +
                            "', configuration asks for '" + task_.name + "'");
    for (ParamSet* g : agent_->groups()) restore_params(ar, *g);
    env_steps_ = meta.at("env_steps");
    updates_ = meta.at("updates");
    episodes_ = meta.at("episodes");
    next_eval_ = meta.at("next_eval");
    metrics_bytes_ = meta.at("metrics_bytes");
    rng_.set_state(meta.at("rng"));
    const json& l = meta.at("last_losses");
    last_losses_.world = {l.at(0), l.at(1), l.at(2), l.at(3), l.at(4)};
    last_losses_.behavior = {l.at(5), l.at(6)};
    last_losses_.count = l.at(7);
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint " + path.string() + ": bad metadata: " + e.what());
  }
  if (episode_dir) {
    replay_ = ReplayBuffer(*episode_dir);
    replay_.load_from_disk(episodes_);
  }
}

TrainConfig Trainer::checkpoint_config(const std::filesystem::path& path) {
  const TensorArchive ar = TensorArchive::load(path);
  if (!ar.meta().contains("config"))
    throw CheckpointError("checkpoint " + path.string() + " has no stored configuration");
  try {
    return config_from_json(ar.meta().at("config"));
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace protocad
