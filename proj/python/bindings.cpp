#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "protocad/behavior.hpp"
#include "protocad/checks.hpp"
#include "protocad/config.hpp"
#include "protocad/env.hpp"
#include "protocad/proto_context.hpp"
#include "protocad/serialize.hpp"
#include "protocad/trainer.hpp"

namespace py = pybind11;
using namespace protocad;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Tensor::from({r, c}, std::vector<Scalar>(a.data(), a.data() + r * c));
}

Array array_from(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

TrainConfig config_from_string(const std::string& text) {
  return config_from_json(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the protocad package";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  m.def("run_checks", [](std::uint64_t seed, bool negative_control) {
        CheckOptions opt;
        opt.seed = seed;
        opt.broken_reward_wiring = negative_control;
        const CheckReport r = run_checks(opt);
        return py::make_tuple(r.ok(), r.table());
      },
      py::arg("seed") = 7, py::arg("negative_control") = false);

  m.def("lambda_returns", [](const std::vector<double>& rewards, const std::vector<double>& values,
                             double gamma, double lam) {
        return lambda_returns<double>(rewards, values, gamma, lam);
      },
      py::arg("rewards"), py::arg("values"), py::arg("gamma"), py::arg("lam"));

  m.def("sinkhorn", [](const Array& scores, double eps, int iters) {
        return array_from(sinkhorn_scores(tensor_from(scores), eps, iters));
      },
      py::arg("scores"), py::arg("eps") = 0.05, py::arg("iters") = 3);

  m.def("temporal_crossover_loss", [](const Array& predicted, const Array& target, std::size_t seq_len,
                                      bool aligned) {
        return static_cast<double>(temporal_crossover_loss(tensor_from(predicted), tensor_from(target), seq_len,
                                                           aligned ? Pairing::aligned : Pairing::crossed)
                                       .item());
      },
      py::arg("predicted"), py::arg("target"), py::arg("seq_len"), py::arg("aligned") = false);

  m.def("task_names", &task_names);
  m.def("context_grid", [](const std::string& task, const std::string& split) {
    std::vector<std::pair<double, double>> out;
    for (const auto& c : context_grid(make_task(task), parse_split(split)))
      out.emplace_back(c.mass_mult, c.damping_mult);
    return out;
  });

  py::class_<Env>(m, "Env")
      .def(py::init([](const std::string& task, int action_repeat, int episode_length) {
             EnvConfig cfg;
             cfg.action_repeat = action_repeat;
             cfg.episode_length = episode_length;
             return Env(make_task(task), cfg);
           }),
           py::arg("task"), py::arg("action_repeat") = 2, py::arg("episode_length") = 200)
      .def("reset",
           [](Env& env, double mass, double damping, const std::string& split, std::uint64_t seed) {
             return env.reset({mass, damping, parse_split(split)}, seed);
           },
           py::arg("mass_mult") = 1.0, py::arg("damping_mult") = 1.0, py::arg("split") = "train",
           py::arg("seed") = 0)
      .def("step",
           [](Env& env, const std::vector<double>& action) {
             const Transition tr = env.step(action);
             return py::make_tuple(tr.observation, tr.reward, tr.done);
           })
      .def_property_readonly("clamp_count", &Env::clamp_count)
      .def_property_readonly("steps", &Env::steps);

  m.def("resolve_config", [](const std::string& text) { return config_to_json(config_from_string(text)).dump(); });

  m.def("train", [](const std::string& config_text, const std::string& out_dir, std::size_t threads) {
        Trainer trainer(config_from_string(config_text));
        {
          py::gil_scoped_release release;
          trainer.train(out_dir, threads);
        }
        return nlohmann::json{{"env_steps", trainer.env_steps()},
                              {"updates", trainer.updates()},
                              {"episodes", trainer.episodes()}}
            .dump();
      },
      py::arg("config"), py::arg("out_dir"), py::arg("threads") = 1);

  m.def("evaluate", [](const std::string& checkpoint, const std::string& split, std::size_t episodes,
                       std::uint64_t seed, std::size_t threads) {
        Trainer trainer(Trainer::checkpoint_config(checkpoint));
        trainer.load_checkpoint(checkpoint);
        py::gil_scoped_release release;
        return trainer.evaluate(parse_split(split), episodes, seed, threads).to_json().dump();
      },
      py::arg("checkpoint"), py::arg("split") = "test", py::arg("episodes") = 5, py::arg("seed") = 0,
      py::arg("threads") = 1);
}
