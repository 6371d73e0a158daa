#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "protocad/rng.hpp"
#include "protocad/tensor.hpp"

using namespace protocad;

namespace {

Tensor rand_t(Rng& rng, Shape s, double lo = -1, double hi = 1, bool grad = true) {
  std::vector<Scalar> v(numel_of(s));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(s), std::move(v), grad);
}

double rel_err(std::span<const Scalar> a, const std::vector<double>& n) {
  double d = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    d += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double den = std::max(std::sqrt(na), std::sqrt(nn));
  return den < 1e-12 ? 0 : std::sqrt(d) / den;
}

// Checks d/dx sum(W * f(x, others)) against central differences.
void fd_check(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> in,
              Rng& rng) {
  Tensor w;
  {
    NoGradGuard ng;
    const Tensor probe = f(in);
    w = rand_t(rng, probe.shape(), -1, 1, false);
  }
  for (auto& t : in) t.clear_grad();
  sum(mul(f(in), w)).backward();
  for (auto& t : in) {
    if (!t.requires_grad()) continue;
    const auto num = oracle::numeric_grad(t, [&] {
      NoGradGuard ng;
      return sum(mul(f(in), w)).item();
    });
    std::vector<Scalar> ana(t.numel(), 0);
    if (t.has_grad()) ana.assign(t.grad().begin(), t.grad().end());
    CHECK(rel_err(ana, num) <= 1e-4);
  }
}

}  // namespace

TEST_CASE("construction and shape helpers") {
  const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6);
  CHECK(Tensor::from({4}, {1, 2, 3, 4}).rows() == 1);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("softmax examples") {
  const Tensor a = softmax(Tensor::from({1, 3}, {0, 0, 0}), 1, 1.0);
  for (int i = 0; i < 3; ++i) CHECK(a.at(0, i) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  const Tensor b = softmax(Tensor::from({1, 2}, {1, 0}), 1, 0.1);
  const long double e10 = std::exp(10.0L);
  CHECK(std::abs(b.at(0, 0) - double(e10 / (e10 + 1))) < 1e-12);
  CHECK(std::abs(b.at(0, 1) - double(1 / (e10 + 1))) < 1e-12);
  CHECK(b.at(0, 0) == doctest::Approx(0.9999546).epsilon(1e-7));
}

TEST_CASE("softmax rows sum to one and l2_normalize gives unit rows") {
  Rng rng(3);
  const Tensor x = rand_t(rng, {7, 5}, -20, 20, false);
  const Tensor s = softmax(x, 1, 0.3);
  const Tensor n = l2_normalize(x, 1);
  for (std::size_t i = 0; i < 7; ++i) {
    double rs = 0, nn = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      rs += s.at(i, j);
      nn += n.at(i, j) * n.at(i, j);
    }
    CHECK(std::abs(rs - 1) < 1e-9);
    CHECK(std::abs(std::sqrt(nn) - 1) < 1e-9);
  }
  const Tensor u = l2_normalize(Tensor::from({1, 2}, {3, 4}), 1);
  CHECK(u.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u.at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("backward on sum(x*x)") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  sum(mul(x, x)).backward();
  CHECK(x.grad()[0] == 2);
  CHECK(x.grad()[1] == 4);
  // Leaf gradients accumulate.
  sum(mul(x, x)).backward();
  CHECK(x.grad()[1] == 8);
  CHECK_THROWS_AS(mul(x, x).backward(), ShapeError);
}

TEST_CASE("log floor") {
  Tensor x = Tensor::from({1, 2}, {0.0, 2.0}, true);
  const Tensor y = log(x);
  CHECK(y.at(0, 0) == doctest::Approx(std::log(1e-8)));
  sum(y).backward();
  CHECK(x.grad()[0] == 0);
  CHECK(x.grad()[1] == doctest::Approx(0.5));
}

TEST_CASE("stop_gradient has value x and zero upstream gradient") {
  Tensor x = Tensor::from({1, 3}, {1, -2, 3}, true);
  const Tensor s = stop_gradient(x);
  for (int i = 0; i < 3; ++i) CHECK(s.at(0, i) == x.at(0, i));
  Tensor y = Tensor::from({1, 3}, {0.5, 0.5, 0.5}, true);
  sum(mul(s, y)).backward();
  CHECK_FALSE(x.has_grad());
  CHECK(y.grad()[1] == -2);
}

TEST_CASE("NoGradGuard records no graph") {
  Tensor x = Tensor::from({1, 2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard ng;
    CHECK_FALSE(grad_enabled());
    y = mul(x, x);
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("shape errors name the op and the shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(apply_primitive("nope", std::vector<Tensor>{a}), std::invalid_argument);
}

TEST_CASE("every primitive matches central differences on 100 random shapes") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.index(4), c = 1 + rng.index(5), k = 1 + rng.index(4);
    const Shape rc{r, c};
    fd_check([](auto& in) { return matmul(in[0], in[1]); }, {rand_t(rng, rc), rand_t(rng, {c, k})}, rng);
    fd_check([](auto& in) { return add(in[0], in[1]); }, {rand_t(rng, rc), rand_t(rng, {1, c})}, rng);
    fd_check([](auto& in) { return sub(in[0], in[1]); }, {rand_t(rng, rc), rand_t(rng, {r, 1})}, rng);
    fd_check([](auto& in) { return mul(in[0], in[1]); }, {rand_t(rng, rc), rand_t(rng, rc)}, rng);
    fd_check([](auto& in) { return div(in[0], in[1]); }, {rand_t(rng, rc), rand_t(rng, rc, 0.5, 2)}, rng);
    fd_check([](auto& in) { return transpose(in[0]); }, {rand_t(rng, rc)}, rng);
    fd_check([](auto& in) { return concat(in, 1); }, {rand_t(rng, rc), rand_t(rng, {r, k})}, rng);
    fd_check([](auto& in) { return concat(in, 0); }, {rand_t(rng, rc), rand_t(rng, {k, c})}, rng);
    fd_check([c](auto& in) { return slice(in[0], 1, 0, (c + 1) / 2); }, {rand_t(rng, rc)}, rng);
    fd_check([](auto& in) { return tanh(in[0]); }, {rand_t(rng, rc, -2, 2)}, rng);
    fd_check([](auto& in) { return elu(in[0]); }, {rand_t(rng, rc, -2, 2)}, rng);
    fd_check([](auto& in) { return softplus(in[0]); }, {rand_t(rng, rc, -3, 3)}, rng);
    fd_check([](auto& in) { return exp(in[0]); }, {rand_t(rng, rc)}, rng);
    fd_check([](auto& in) { return log(in[0]); }, {rand_t(rng, rc, 0.2, 3)}, rng);
    fd_check([](auto& in) { return square(in[0]); }, {rand_t(rng, rc)}, rng);
    for (int axis : {0, 1, -1}) {
      fd_check([axis](auto& in) { return sum(in[0], axis); }, {rand_t(rng, rc)}, rng);
      fd_check([axis](auto& in) { return mean(in[0], axis); }, {rand_t(rng, rc)}, rng);
    }
    fd_check([](auto& in) { return l2_normalize(in[0], 1); }, {rand_t(rng, rc, 0.1, 1)}, rng);
    fd_check([](auto& in) { return softmax(in[0], 1, 0.7); }, {rand_t(rng, rc)}, rng);
    fd_check([](auto& in) { return softmax(in[0], 0, 1.3); }, {rand_t(rng, rc)}, rng);
    fd_check([](auto& in) { return clamp_min(in[0], 0.0); },
             {Tensor::from(rc, [&] {
                std::vector<Scalar> v(r * c);
                for (auto& x : v) x = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.1, 1);
                return v;
              }(), true)},
             rng);
    fd_check([](auto& in) { return sigmoid(in[0]); }, {rand_t(rng, rc, -3, 3)}, rng);
  }
}

TEST_CASE("primitive names dispatch") {
  for (const auto& name : primitive_names()) CHECK_FALSE(name.empty());
  const Tensor x = Tensor::from({1, 2}, {3, 4});
  PrimitiveAttrs a;
  a.axis = 1;
  CHECK(apply_primitive("l2_normalize", std::vector<Tensor>{x}, a).at(0, 0) == doctest::Approx(0.6));
}

TEST_CASE("op trace labels primitives by stage") {
  OpTrace trace;
  const Tensor x = Tensor::from({1, 2}, {1, 2});
  {
    TraceStage s("outer");
    tanh(x);
    {
      TraceStage inner("inner");
      exp(x);
    }
    square(x);
  }
  REQUIRE(trace.events().size() == 3);
  CHECK(trace.events()[0].stage == "outer");
  CHECK(trace.events()[1].stage == "inner");
  CHECK(trace.events()[1].op == "exp");
  CHECK(trace.events()[2].stage == "outer");
}
