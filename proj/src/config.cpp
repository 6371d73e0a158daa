#include "protocad/config.hpp"

#include <fstream>

namespace protocad {

using nlohmann::json;

TrainConfig::TrainConfig() {
  world.h_dim = 64;
  world.z_dim = 16;
  proto.num_prototypes = 32;
  agent.horizon = 10;
}

TaskSpec TrainConfig::task_spec() const {
  TaskSpec spec = make_task(task);
  if (contexts) spec.contexts = *contexts;
  return spec;
}

void TrainConfig::finalize() {
  const TaskSpec spec = task_spec();
  world.obs_dim = spec.obs_dim;
  world.act_dim = spec.act_dim;
  world.feature_dim = feature_dim(world.h_dim + world.z_dim, proto.dim, ablation);
  validate();
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (seq_len == 0 || seq_len % 2 != 0) fail("seq_len must be positive and even");
  if (seq_len > static_cast<std::size_t>(episode_length)) fail("seq_len exceeds episode_length");
  if (batch_size == 0) fail("batch_size must be positive");
  if (collect_interval == 0) fail("collect_interval must be positive");
  if (seed_episodes == 0) fail("seed_episodes must be positive");
  if (action_repeat <= 0 || episode_length <= 0) fail("action_repeat and episode_length must be positive");
  if (eval_every == 0 || eval_episodes == 0) fail("eval_every and eval_episodes must be positive");
  if (total_env_steps == 0) fail("total_env_steps must be positive");
  if (!(augment_lo > 0) || augment_lo > augment_hi) fail("augment range must satisfy 0 < lo <= hi");
  if (profile != "desk" && profile != "paper") fail("unknown profile '" + profile + "'");
  const TaskSpec spec = task_spec();
  auto disjoint = [&](const std::vector<double>& a, const std::vector<double>& b, const char* what) {
    for (double x : a)
      for (double y : b)
        if (x == y) fail(std::string("train and test ") + what + " lists overlap");
  };
  disjoint(spec.contexts.train_mass, spec.contexts.test_mass, "mass");
  if (spec.contexts.train_mass.empty() || spec.contexts.test_mass.empty()) fail("empty mass list");
  try {
    world.validate();
    proto.validate();
    agent.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

TrainConfig profile_config(const std::string& name) {
  TrainConfig cfg;
  if (name == "desk") return cfg;
  if (name != "paper") throw ConfigError("config: unknown profile '" + name + "'");
  cfg.profile = "paper";
  cfg.batch_size = 16;
  cfg.seq_len = 50;
  cfg.agent.horizon = 15;
  cfg.proto.num_prototypes = 100;
  return cfg;
}

json config_to_json(const TrainConfig& c) {
  const ContextLists ctx = c.task_spec().contexts;
  return json{
      {"profile", c.profile},
      {"task", c.task},
      {"seed", c.seed},
      {"ablation", to_string(c.ablation)},
      {"total_env_steps", c.total_env_steps},
      {"seed_episodes", c.seed_episodes},
      {"collect_interval", c.collect_interval},
      {"batch_size", c.batch_size},
      {"seq_len", c.seq_len},
      {"action_repeat", c.action_repeat},
      {"episode_length", c.episode_length},
      {"eval_every", c.eval_every},
      {"eval_episodes", c.eval_episodes},
      {"baseline_episodes", c.baseline_episodes},
      {"checkpoint_every", c.checkpoint_every},
      {"max_updates", c.max_updates},
      {"augment", {{"lo", c.augment_lo}, {"hi", c.augment_hi}}},
      {"detach_context_in_decoder", c.detach_context_in_decoder},
      {"world_model",
       {{"h_dim", c.world.h_dim},
        {"z_dim", c.world.z_dim},
        {"hidden", c.world.hidden},
        {"depth", c.world.depth},
        {"beta", c.world.beta},
        {"free_nats", c.world.free_nats}}},
      {"proto",
       {{"num_prototypes", c.proto.num_prototypes},
        {"dim", c.proto.dim},
        {"temperature", c.proto.temperature},
        {"sinkhorn_eps", c.proto.sinkhorn_eps},
        {"sinkhorn_iters", c.proto.sinkhorn_iters},
        {"ema", c.proto.ema}}},
      {"agent",
       {{"horizon", c.agent.horizon},
        {"gamma", c.agent.gamma},
        {"lambda", c.agent.lambda},
        {"expl_noise", c.agent.expl_noise},
        {"hidden", c.agent.hidden},
        {"depth", c.agent.depth}}},
      {"optim",
       {{"world_lr", c.optim.world_lr},
        {"actor_lr", c.optim.actor_lr},
        {"critic_lr", c.optim.critic_lr},
        {"adam_eps", c.optim.adam_eps},
        {"clip_norm", c.optim.clip_norm}}},
      {"contexts",
       {{"train_mass", ctx.train_mass},
        {"test_mass", ctx.test_mass},
        {"train_damping", ctx.train_damping},
        {"test_damping", ctx.test_damping}}}};
}

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integer fields reject fractional or negative values.
    if (a.is_number_unsigned() || a.is_number_integer()) return b.is_number_integer() || b.is_number_unsigned();
    return true;
  }
  return a.type() == b.type();
}

// Checks every user key against the materialized defaults.
void check_keys(const json& defaults, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config: '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    const json& def = defaults.at(key);
    if (key == "contexts" && prefix.empty()) {
      check_keys(def, value, path);
      for (const auto& [k, list] : value.items()) {
        if (!list.is_array()) throw ConfigError("config: '" + path + "." + k + "' must be an array");
        for (const auto& x : list)
          if (!x.is_number()) throw ConfigError("config: '" + path + "." + k + "' must hold numbers");
      }
      continue;
    }
    if (def.is_object()) {
      check_keys(def, value, path);
    } else if (!same_kind(def, value)) {
      throw ConfigError("config: key '" + path + "' has the wrong type (expected " +
                        std::string(def.type_name()) + ")");
    }
  }
}

}  // namespace

TrainConfig config_from_json(const json& user) {
  if (!user.is_object()) throw ConfigError("config: top level must be a JSON object");
  std::string profile = "desk";
  if (user.contains("profile")) {
    if (!user["profile"].is_string()) throw ConfigError("config: key 'profile' must be a string");
    profile = user["profile"];
  }
  const TrainConfig base = profile_config(profile);
  const json defaults = config_to_json(base);
  check_keys(defaults, user, "");

  json j = defaults;
  j.merge_patch(user);

  TrainConfig c = base;
  try {
    c.task = j["task"];
    make_task(c.task);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: key 'task': ") + e.what());
  }
  try {
    c.ablation = parse_ablation(j["ablation"]);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: key 'ablation': ") + e.what());
  }
  c.seed = j["seed"];
  c.total_env_steps = j["total_env_steps"];
  c.seed_episodes = j["seed_episodes"];
  c.collect_interval = j["collect_interval"];
  c.batch_size = j["batch_size"];
  c.seq_len = j["seq_len"];
  c.action_repeat = j["action_repeat"];
  c.episode_length = j["episode_length"];
  c.eval_every = j["eval_every"];
  c.eval_episodes = j["eval_episodes"];
  c.baseline_episodes = j["baseline_episodes"];
  c.checkpoint_every = j["checkpoint_every"];
  c.max_updates = j["max_updates"];
  c.augment_lo = j["augment"]["lo"];
  c.augment_hi = j["augment"]["hi"];
  c.detach_context_in_decoder = j["detach_context_in_decoder"];

  const json& w = j["world_model"];
  c.world.h_dim = w["h_dim"];
  c.world.z_dim = w["z_dim"];
  c.world.hidden = w["hidden"];
  c.world.depth = w["depth"];
  c.world.beta = w["beta"];
  c.world.free_nats = w["free_nats"];

  const json& p = j["proto"];
  c.proto.num_prototypes = p["num_prototypes"];
  c.proto.dim = p["dim"];
  c.proto.temperature = p["temperature"];
  c.proto.sinkhorn_eps = p["sinkhorn_eps"];
  c.proto.sinkhorn_iters = p["sinkhorn_iters"];
  c.proto.ema = p["ema"];

  const json& a = j["agent"];
  c.agent.horizon = a["horizon"];
  c.agent.gamma = a["gamma"];
  c.agent.lambda = a["lambda"];
  c.agent.expl_noise = a["expl_noise"];
  c.agent.hidden = a["hidden"];
  c.agent.depth = a["depth"];

  const json& o = j["optim"];
  c.optim.world_lr = o["world_lr"];
  c.optim.actor_lr = o["actor_lr"];
  c.optim.critic_lr = o["critic_lr"];
  c.optim.adam_eps = o["adam_eps"];
  c.optim.clip_norm = o["clip_norm"];

  if (user.contains("contexts")) {
    // Defaults for the contexts block come from the chosen task, not the
    // profile's default task.
    ContextLists lists = make_task(c.task).contexts;
    const json& u = user["contexts"];
    if (u.contains("train_mass")) lists.train_mass = u["train_mass"].get<std::vector<double>>();
    if (u.contains("test_mass")) lists.test_mass = u["test_mass"].get<std::vector<double>>();
    if (u.contains("train_damping")) lists.train_damping = u["train_damping"].get<std::vector<double>>();
    if (u.contains("test_damping")) lists.test_damping = u["test_damping"].get<std::vector<double>>();
    c.contexts = lists;
  }
  c.finalize();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace protocad
