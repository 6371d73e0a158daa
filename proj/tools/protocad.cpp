#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "protocad/checks.hpp"
#include "protocad/config.hpp"
#include "protocad/serialize.hpp"
#include "protocad/trainer.hpp"

namespace fs = std::filesystem;
using namespace protocad;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kConfigError = 2;
constexpr int kCheckpointError = 3;

constexpr std::uint64_t kEvalStream = 0xe7a1;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string split = "test";
  std::optional<std::size_t> episodes;
  bool grid = false;
  std::optional<std::string> ablation;
  bool negative_control = false;
};

Trainer load_trained(const Flags& f) {
  TrainConfig cfg = Trainer::checkpoint_config(f.checkpoint);
  if (!f.config.empty()) {
    const TrainConfig wanted = load_config(f.config);
    if (wanted.task != cfg.task)
      throw CheckpointError("checkpoint " + f.checkpoint + " holds task '" + cfg.task +
                            "' but the config asks for '" + wanted.task + "'");
  }
  Trainer trainer(cfg);
  trainer.load_checkpoint(f.checkpoint);
  return trainer;
}

int run_train(const Flags& f) {
  TrainConfig cfg = load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.ablation) cfg.ablation = parse_ablation(*f.ablation);
  cfg.finalize();
  const fs::path out = f.out.empty() ? fs::path("run") : fs::path(f.out);
  Trainer trainer(cfg);
  trainer.train(out, threads_from_env());
  std::cout << nlohmann::json{{"out", out.string()},
                              {"env_steps", trainer.env_steps()},
                              {"updates", trainer.updates()},
                              {"episodes", trainer.episodes()}}
                   .dump()
            << "\n";
  return kOk;
}

int run_eval(const Flags& f) {
  const Trainer trainer = load_trained(f);
  const Split split = parse_split(f.split);
  const std::size_t episodes = f.episodes.value_or(trainer.config().eval_episodes);
  const std::uint64_t seed = mix_seed(f.seed.value_or(trainer.config().seed), kEvalStream);
  const std::size_t threads = threads_from_env();
  const EvalSummary summary = trainer.evaluate(split, episodes, seed, threads);
  nlohmann::json j = summary.to_json();
  j["task"] = trainer.config().task;
  j["env_steps"] = trainer.env_steps();
  j["checkpoint"] = f.checkpoint;
  if (f.grid) {
    const fs::path dir = f.out.empty() ? fs::path(".") : fs::path(f.out);
    fs::create_directories(dir);
    const fs::path csv = dir / ("grid_" + f.split + ".csv");
    std::ofstream(csv) << grid_csv(trainer.evaluate_grid(split, episodes, seed + 1, threads));
    j["grid_csv"] = csv.string();
  }
  std::cout << j.dump() << "\n";
  return kOk;
}

int run_export(const Flags& f) {
  const Trainer trainer = load_trained(f);
  const Split split = parse_split(f.split);
  const std::size_t episodes = f.episodes.value_or(1);
  const std::uint64_t seed = mix_seed(f.seed.value_or(trainer.config().seed), kEvalStream + 1);
  const TrainConfig& cfg = trainer.config();
  const fs::path dir = f.out.empty() ? fs::path(".") : fs::path(f.out);
  fs::create_directories(dir);
  const fs::path csv = dir / ("features_" + f.split + ".csv");
  std::ofstream os(csv);
  os.precision(9);
  os << "task,mass_mult,damping_mult,episode,step";
  for (std::size_t i = 0; i < cfg.proto.dim; ++i) os << ",u" << i;
  for (std::size_t i = 0; i < cfg.proto.dim; ++i) os << ",e" << i;
  os << ",argmax_w,max_w\n";
  std::size_t rows = 0, index = 0;
  for (const EnvContext& ctx : context_grid(cfg.task_spec(), split)) {
    for (std::size_t ep = 0; ep < episodes; ++ep, ++index) {
      Rng rng(mix_seed(seed, index));
      trainer.collect_episode(Policy::eval, ctx, rng.next_u64(), rng, [&](const StepInfo& info) {
        const auto& c = *info.context;
        os << cfg.task << ',' << ctx.mass_mult << ',' << ctx.damping_mult << ',' << ep << ','
           << info.step;
        for (Scalar v : c.u.data()) os << ',' << v;
        for (Scalar v : c.e.data()) os << ',' << v;
        const auto w = c.w.data();
        const auto best = std::max_element(w.begin(), w.end());
        os << ',' << (best - w.begin()) << ',' << *best << '\n';
        ++rows;
      });
    }
  }
  std::cout << nlohmann::json{{"features_csv", csv.string()}, {"rows", rows}}.dump() << "\n";
  return kOk;
}

int run_check(const Flags& f) {
  CheckOptions opts;
  if (f.seed) opts.seed = *f.seed;
  opts.broken_reward_wiring = f.negative_control;
  const CheckReport report = run_checks(opts);
  std::cout << report.table();
  return report.ok() ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"protocad: prototypical context-aware model-based RL"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "Train an agent from a config file");
  train->add_option("--config", f.config, "Run configuration (JSON)")->required();
  train->add_option("--seed", f.seed, "Override the config seed");
  train->add_option("--out", f.out, "Output directory");
  train->add_option("--ablation", f.ablation, "full | no_projection | plain_swav")
      ->check(CLI::IsMember({"full", "no_projection", "plain_swav"}));

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* exportf = app.add_subcommand("export-features", "Write per-step context features as CSV");
  for (auto* sub : {eval, exportf}) {
    sub->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
    sub->add_option("--config", f.config, "Optional config; its task must match the checkpoint");
    sub->add_option("--seed", f.seed, "Evaluation seed");
    sub->add_option("--out", f.out, "Output directory for CSV files");
    sub->add_option("--split", f.split, "train | test")->check(CLI::IsMember({"train", "test"}));
    sub->add_option("--episodes", f.episodes, "Episodes (per grid cell with --grid)");
  }
  eval->add_flag("--grid", f.grid, "Also write the per-context grid report");

  auto* check = app.add_subcommand("check", "Run the self-check suites");
  check->add_option("--seed", f.seed, "Seed for random test cases");
  check->add_flag("--negative-control", f.negative_control,
                  "Feed x instead of s to a reward head fixture; isolation must fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kConfigError;
  }

  try {
    if (*train) return run_train(f);
    if (*eval) return run_eval(f);
    if (*exportf) return run_export(f);
    if (*check) return run_check(f);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckpointError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
