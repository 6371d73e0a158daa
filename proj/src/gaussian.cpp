#include "protocad/gaussian.hpp"

#include <cmath>
#include <numbers>

namespace protocad {

namespace {

void require_same(const char* what, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace

DiagGaussian DiagGaussian::from_raw(const Tensor& mean, const Tensor& raw_std, Scalar min_std) {
  require_same("DiagGaussian", mean, raw_std);
  return {mean, add_scalar(softplus(raw_std), min_std)};
}

DiagGaussian DiagGaussian::from_params(const Tensor& params, Scalar min_std) {
  const std::size_t c = params.cols();
  if (c % 2 != 0) throw ShapeError("DiagGaussian::from_params: odd width " + shape_str(params.shape()));
  return from_raw(slice(params, 1, 0, c / 2), slice(params, 1, c / 2, c), min_std);
}

Tensor sample_reparameterized(const DiagGaussian& d, const Tensor& noise) {
  require_same("sample_reparameterized", d.mean, noise);
  return add(d.mean, mul(d.std, noise));
}

Tensor log_prob(const DiagGaussian& d, const Tensor& value) {
  require_same("log_prob", d.mean, value);
  const Tensor z = div(sub(value, d.mean), d.std);
  const auto half_log_2pi = static_cast<Scalar>(0.5 * std::log(2.0 * std::numbers::pi));
  const Tensor per_dim = add_scalar(sub(scale(square(z), -0.5), log(d.std)), -half_log_2pi);
  return sum(per_dim, 1);
}

Tensor kl_divergence(const DiagGaussian& q, const DiagGaussian& p) {
  require_same("kl_divergence", q.mean, p.mean);
  require_same("kl_divergence", q.std, p.std);
  // log(sp/sq) + (sq^2 + (mq-mp)^2) / (2 sp^2) - 1/2
  const Tensor var_p = square(p.std);
  const Tensor num = add(square(q.std), square(sub(q.mean, p.mean)));
  const Tensor per_dim =
      add_scalar(add(sub(log(p.std), log(q.std)), scale(div(num, var_p), 0.5)), -0.5);
  return sum(per_dim, 1);
}

}  // namespace protocad

namespace protocad {

Tensor NoiseTape::normal(std::size_t rows, std::size_t cols) {
  std::vector<Scalar> v(rows * cols);
  for (auto& x : v) x = static_cast<Scalar>(rng_.normal());
  return Tensor::from({rows, cols}, std::move(v));
}

}  // namespace protocad
