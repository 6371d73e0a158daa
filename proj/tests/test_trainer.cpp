#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "protocad/serialize.hpp"
#include "protocad/trainer.hpp"
#include "trace_diff.hpp"

using namespace protocad;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config(Ablation ablation = Ablation::full, std::uint64_t seed = 3) {
  json j = {{"seed", seed},
            {"ablation", to_string(ablation)},
            {"batch_size", 3},
            {"seq_len", 6},
            {"episode_length", 20},
            {"seed_episodes", 2},
            {"collect_interval", 4},
            {"total_env_steps", 200},
            {"eval_every", 80},
            {"eval_episodes", 2},
            {"baseline_episodes", 2},
            {"checkpoint_every", 1},
            {"world_model", {{"h_dim", 10}, {"z_dim", 4}, {"hidden", 12}}},
            {"proto", {{"num_prototypes", 5}, {"dim", 6}}},
            {"agent", {{"horizon", 3}, {"hidden", 12}}}};
  return config_from_json(j);
}

void seed_replay(Trainer& t) {
  Rng rng(99);
  const TaskSpec task = t.config().task_spec();
  for (std::uint64_t i = 0; i < 2; ++i)
    t.replay().add(t.collect_episode(Policy::random, sample_context(task, Split::train, rng), i, rng));
}

std::vector<std::vector<Scalar>> snapshot(const ParamSet& p) {
  std::vector<std::vector<Scalar>> out;
  for (const auto& e : p.entries()) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "protocad_test_trainer" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void max_norm_deviation_ok(const Trainer& t) {
  const Tensor& c = t.agent().proto->prototypes();
  for (std::size_t k = 0; k < c.rows(); ++k) {
    double n = 0;
    for (std::size_t d = 0; d < c.cols(); ++d) n += c.at(k, d) * c.at(k, d);
    CHECK(std::abs(std::sqrt(n) - 1) <= 1e-6);
  }
}

}  // namespace

TEST_CASE("world-model update bookkeeping and prototype norms") {
  Trainer t(tiny_config());
  seed_replay(t);
  for (int i = 0; i < 5; ++i) {
    const auto [w, b] = t.update();
    CHECK(std::abs(w.total - (w.kl + w.obs + w.rew + w.tc)) <= 1e-9);
    CHECK(w.kl >= 1.0 - 1e-12);  // free-nats floor
    CHECK(std::isfinite(b.actor));
    max_norm_deviation_ok(t);
  }
  CHECK(t.updates() == 5);
}

TEST_CASE("optimizer partition") {
  Trainer t(tiny_config());
  seed_replay(t);
  Agent& ag = t.agent();
  const SequenceBatch batch = t.replay().sample(3, 6, t.rng());
  const auto actor0 = snapshot(ag.actor_params), critic0 = snapshot(ag.critic_params);
  const auto world0 = snapshot(ag.world);
  RssmState starts;
  t.world_model_update(batch, &starts);
  CHECK(snapshot(ag.actor_params) == actor0);
  CHECK(snapshot(ag.critic_params) == critic0);
  CHECK(snapshot(ag.world) != world0);

  const auto world1 = snapshot(ag.world), proj1 = snapshot(ag.projector),
             protos1 = snapshot(ag.prototypes), target1 = snapshot(ag.target_projector);
  t.behavior_update(starts);
  CHECK(snapshot(ag.world) == world1);
  CHECK(snapshot(ag.projector) == proj1);
  CHECK(snapshot(ag.prototypes) == protos1);
  CHECK(snapshot(ag.target_projector) == target1);
  CHECK(snapshot(ag.actor_params) != actor0);
  CHECK(snapshot(ag.critic_params) != critic0);
}

TEST_CASE("feature width follows the ablation") {
  CHECK(Trainer(tiny_config(Ablation::full)).config().world.feature_dim == 14 + 12);
  CHECK(Trainer(tiny_config(Ablation::no_projection)).config().world.feature_dim == 14 + 6);
}

TEST_CASE("crossed and aligned pairing differ on time-varying data") {
  Trainer full(tiny_config(Ablation::full)), plain(tiny_config(Ablation::plain_swav));
  seed_replay(full);
  seed_replay(plain);
  const SequenceBatch batch = full.replay().sample(3, 6, full.rng());
  plain.rng() = full.rng();
  const WorldLosses a = full.world_model_update(batch);
  const WorldLosses b = plain.world_model_update(batch);
  CHECK(a.obs == b.obs);
  CHECK(a.kl == b.kl);
  CHECK(a.tc != b.tc);
}

TEST_CASE("ablation traces differ in exactly one stage") {
  auto trace_update = [](Ablation mode) {
    Trainer t(tiny_config(mode));
    seed_replay(t);
    OpTrace tr;
    t.update();
    return tr.events();
  };
  const auto full = trace_update(Ablation::full);
  CHECK(trace::differing_stages(full, trace_update(Ablation::full)).empty());
  CHECK(trace::differing_stages(full, trace_update(Ablation::no_projection)) ==
        std::set<std::string>{"feature"});
  CHECK(trace::differing_stages(full, trace_update(Ablation::plain_swav)) ==
        std::set<std::string>{"tc_loss"});
}

TEST_CASE("checkpoint save, load and update match the uninterrupted run") {
  const auto dir = fresh_dir("ckpt");
  Trainer a(tiny_config());
  seed_replay(a);
  for (int i = 0; i < 3; ++i) a.update();
  a.save_checkpoint(dir / "c.pckp");

  Trainer b(tiny_config());
  seed_replay(b);
  b.load_checkpoint(dir / "c.pckp");
  CHECK(b.updates() == 3);
  for (int i = 0; i < 2; ++i) {
    const auto wa = a.update().first, wb = b.update().first;
    CHECK(wa.total == wb.total);
  }
  for (std::size_t g = 0; g < a.agent().groups().size(); ++g) {
    const ParamSet& pa = *a.agent().groups()[g];
    const ParamSet& pb = *b.agent().groups()[g];
    CHECK(snapshot(pa) == snapshot(pb));
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa.entries()[i].slot.m == pb.entries()[i].slot.m);
      CHECK(pa.entries()[i].slot.v == pb.entries()[i].slot.v);
    }
  }
}

TEST_CASE("checkpoints refuse a different task") {
  const auto dir = fresh_dir("task");
  Trainer a(tiny_config());
  a.save_checkpoint(dir / "c.pckp");
  TrainConfig other = tiny_config();
  other.task = "msd_reach";
  other.finalize();
  Trainer b(other);
  CHECK_THROWS_AS(b.load_checkpoint(dir / "c.pckp"), CheckpointError);
  CHECK(Trainer::checkpoint_config(dir / "c.pckp").task == "pendulum_swingup");
}

TEST_CASE("evaluation does not depend on the thread count") {
  Trainer t(tiny_config());
  const EvalSummary one = t.evaluate(Split::test, 4, 17, 1);
  const EvalSummary four = t.evaluate(Split::test, 4, 17, 4);
  CHECK(one.returns == four.returns);
  CHECK(one.episodes == 4);
  const auto grid = t.evaluate_grid(Split::test, 1, 5, 2);
  CHECK(grid.size() == 8);
  CHECK(grid_csv(grid).rfind("mass_mult,damping_mult,split,return_mean,return_std,episodes\n", 0) == 0);
}

TEST_CASE("episodes keep their context and report the active cluster") {
  Trainer t(tiny_config());
  const EnvContext ctx{1.5, 1.0, Split::test};
  Rng rng(4);
  std::size_t seen = 0;
  const EpisodeRecord ep = t.collect_episode(Policy::explore, ctx, 12, rng, [&](const StepInfo& s) {
    CHECK(s.context != nullptr);
    CHECK(s.step == seen);
    ++seen;
  });
  CHECK(ep.context == ctx);
  CHECK(ep.length == 20);
  CHECK(seen == 20);
  for (float a : ep.act) {
    CHECK(a >= -1);
    CHECK(a <= 1);
  }
}

TEST_CASE("training runs are reproducible and resume bitwise") {
  const auto a = fresh_dir("run_a"), b = fresh_dir("run_b");
  Trainer(tiny_config()).train(a);
  Trainer(tiny_config()).train(b);
  const std::string metrics = read_file(a / "metrics.jsonl");
  CHECK(!metrics.empty());
  CHECK(metrics == read_file(b / "metrics.jsonl"));
  CHECK(fs::exists(a / "baseline.json"));
  CHECK(fs::exists(a / "resolved-config.json"));

  // Seed-episode records carry null losses; later ones are numbers.
  std::istringstream lines(metrics);
  std::string line;
  std::getline(lines, line);
  CHECK(json::parse(line).at("loss_kl").is_null());
  bool saw_eval = false, saw_loss = false;
  while (std::getline(lines, line)) {
    const json r = json::parse(line);
    saw_eval |= r.at("phase") == "eval_test";
    saw_loss |= r.at("loss_kl").is_number();
  }
  CHECK(saw_eval);
  CHECK(saw_loss);

  // Interrupt after a few updates, then resume to completion.
  const auto c = fresh_dir("run_c");
  TrainConfig partial = tiny_config();
  partial.max_updates = 8;
  Trainer(partial).train(c);
  Trainer(tiny_config()).train(c);
  CHECK(read_file(c / "metrics.jsonl") == metrics);
}
