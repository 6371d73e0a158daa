#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "protocad/optim.hpp"
#include "protocad/serialize.hpp"

using namespace protocad;

TEST_CASE("ParamSet keeps insertion order and unique names") {
  ParamSet p("g");
  p.add("b", Tensor::zeros({1, 2}));
  p.add("a", Tensor::zeros({2, 2}));
  CHECK(p.entries()[0].name == "b");
  CHECK(p.entries()[1].name == "a");
  CHECK(p.num_values() == 6);
  CHECK(p.get("a").requires_grad());
  CHECK_THROWS(p.add("a", Tensor::zeros({1})));
  CHECK_THROWS(p.get("missing"));
}

TEST_CASE("Adam first step moves by about lr") {
  ParamSet p("g");
  Tensor w = p.add("w", Tensor::from({1}, {0.0}));
  w.mutable_grad()[0] = 1.0;
  AdamConfig cfg;
  cfg.lr = 3e-4;
  adam_step(p, cfg);
  // m_hat = 1, v_hat = 1: w = -lr / (1 + eps).
  CHECK(w.data()[0] == doctest::Approx(-3e-4 / (1 + cfg.eps)).epsilon(1e-12));
  CHECK_FALSE(w.has_grad());
}

TEST_CASE("Adam matches hand-evaluated recurrences over three steps") {
  ParamSet p("g");
  Tensor w = p.add("w", Tensor::from({2}, {0.5, -1.0}));
  const double grads[3][2] = {{0.2, -0.1}, {-0.4, 0.3}, {0.1, 0.05}};
  AdamConfig cfg{0.01, 0.9, 0.999, 1e-8, 1e9};
  double ref[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 3; ++t) {
    for (int i = 0; i < 2; ++i) {
      w.mutable_grad()[i] = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    adam_step(p, cfg);
  }
  CHECK(w.data()[0] == doctest::Approx(ref[0]).epsilon(1e-12));
  CHECK(w.data()[1] == doctest::Approx(ref[1]).epsilon(1e-12));
}

TEST_CASE("Adam with zero gradient leaves parameters unchanged") {
  ParamSet p("g");
  Tensor w = p.add("w", Tensor::from({3}, {1, 2, 3}));
  w.mutable_grad();  // allocated as zeros
  adam_step(p, AdamConfig{});
  CHECK(w.data()[0] == 1);
  CHECK(w.data()[2] == 3);
}

TEST_CASE("Adam refuses missing gradients") {
  ParamSet p("g");
  Tensor a = p.add("a", Tensor::from({1}, {1}));
  p.add("b", Tensor::from({1}, {1}));
  a.mutable_grad()[0] = 1;
  CHECK_THROWS_WITH_AS(adam_step(p, AdamConfig{}), doctest::Contains("b"), std::runtime_error);
}

TEST_CASE("global norm clipping") {
  ParamSet p("g");
  Tensor w = p.add("w", Tensor::from({2}, {0, 0}));
  w.mutable_grad()[0] = 300;
  w.mutable_grad()[1] = 400;
  AdamConfig cfg;
  cfg.clip_norm = 100;
  CHECK(adam_step(p, cfg) == doctest::Approx(500));
}

TEST_CASE("EMA update") {
  ParamSet online("o"), target("t");
  online.add("w", Tensor::from({2}, {1, 2}));
  target.add("w", Tensor::from({2}, {5, 6}));
  ema_update(target, online, 0.0);
  CHECK(target.get("w").data()[0] == 5);
  ema_update(target, online, 0.05);
  CHECK(target.get("w").data()[0] == doctest::Approx(0.95 * 5 + 0.05 * 1));
  ema_update(target, online, 1.0);
  CHECK(target.get("w").data()[1] == 2);

  ParamSet other("x");
  other.add("v", Tensor::from({2}, {1, 2}));
  CHECK_THROWS(ema_update(target, other, 0.5));
  ParamSet shaped("y");
  shaped.add("w", Tensor::from({3}, {1, 2, 3}));
  CHECK_THROWS(ema_update(target, shaped, 0.5));
}

TEST_CASE("FreezeGuard restores trainability") {
  ParamSet p("g");
  Tensor w = p.add("w", Tensor::from({1}, {1}));
  {
    FreezeGuard f{&p};
    CHECK_FALSE(w.requires_grad());
  }
  CHECK(w.requires_grad());
}

namespace {

std::filesystem::path tmp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "protocad_test_optim";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("checkpoint archive round trip restores values and optimizer slots") {
  ParamSet p("g");
  Tensor w = p.add("w", Tensor::from({2, 2}, {1.5, -2.25, 1e-300, 3.0}));
  p.add("b", Tensor::from({1, 2}, {0.1, 0.2}));
  for (auto& e : p.entries()) e.tensor.mutable_grad();
  w.mutable_grad()[0] = 0.3;
  adam_step(p, AdamConfig{});
  const auto path = tmp_file("roundtrip.pckp");
  save_params(path, p);

  ParamSet q("g");
  q.add("w", Tensor::zeros({2, 2}));
  q.add("b", Tensor::zeros({1, 2}));
  load_params(path, q);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& a = p.entries()[i];
    const auto& b = q.entries()[i];
    CHECK(std::equal(a.tensor.data().begin(), a.tensor.data().end(), b.tensor.data().begin()));
    CHECK(a.slot.m == b.slot.m);
    CHECK(a.slot.v == b.slot.v);
    CHECK(a.slot.step == b.slot.step);
  }
}

TEST_CASE("checkpoint errors report the manifest difference") {
  ParamSet p("g");
  p.add("w", Tensor::zeros({2, 2}));
  const auto path = tmp_file("diff.pckp");
  save_params(path, p);

  ParamSet q("g");
  q.add("w", Tensor::zeros({3, 2}));
  q.add("extra", Tensor::zeros({1}));
  try {
    load_params(path, q);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("g/w") != std::string::npos);
    CHECK(msg.find("g/extra") != std::string::npos);
  }
}

TEST_CASE("truncated or corrupt checkpoints are refused") {
  ParamSet p("g");
  p.add("w", Tensor::zeros({4, 4}));
  p.add("z", Tensor::zeros({4, 4}));
  const auto path = tmp_file("trunc.pckp");
  save_params(path, p);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  ParamSet q("g");
  q.add("w", Tensor::zeros({4, 4}));
  q.add("z", Tensor::zeros({4, 4}));
  CHECK_THROWS_WITH_AS(load_params(path, q), doctest::Contains("g/z"), CheckpointError);

  std::ofstream(path, std::ios::binary | std::ios::trunc) << "nonsense";
  CHECK_THROWS_AS(load_params(path, q), CheckpointError);
}
