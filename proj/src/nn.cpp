#include "protocad/nn.hpp"

#include <cmath>

namespace protocad::nn {

Linear Linear::create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                      Rng& rng, bool with_bias) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<Scalar> w(in * out);
  for (auto& v : w) v = static_cast<Scalar>(rng.uniform(-limit, limit));
  Linear l;
  l.weight = params.add(name + "/w", Tensor::from({in, out}, std::move(w)));
  if (with_bias) l.bias = params.add(name + "/b", Tensor::zeros({1, out}));
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

Mlp::Mlp(ParamSet& params, const std::string& name, std::size_t in, std::size_t hidden,
         std::size_t depth, std::size_t out, Rng& rng) {
  std::size_t width = in;
  for (std::size_t i = 0; i < depth; ++i) {
    layers_.push_back(Linear::create(params, name + "/h" + std::to_string(i), width, hidden, rng));
    width = hidden;
  }
  layers_.push_back(Linear::create(params, name + "/out", width, out, rng));
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor y = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) y = elu(layers_[i](y));
  return layers_.back()(y);
}

GruCell::GruCell(ParamSet& params, const std::string& name, std::size_t in, std::size_t hidden,
                 Rng& rng)
    : hidden_(hidden),
      input_(Linear::create(params, name + "/input", in, 3 * hidden, rng)),
      recurrent_(Linear::create(params, name + "/recurrent", hidden, 3 * hidden, rng)) {}

Tensor GruCell::operator()(const Tensor& x, const Tensor& h) const {
  const std::size_t n = hidden_;
  const Tensor gx = input_(x);
  const Tensor gh = recurrent_(h);
  const Tensor reset = sigmoid(add(slice(gx, 1, 0, n), slice(gh, 1, 0, n)));
  const Tensor update = sigmoid(add(slice(gx, 1, n, 2 * n), slice(gh, 1, n, 2 * n)));
  const Tensor candidate =
      tanh(add(slice(gx, 1, 2 * n, 3 * n), mul(reset, slice(gh, 1, 2 * n, 3 * n))));
  // h' = (1 - update) * candidate + update * h
  return add(candidate, mul(update, sub(h, candidate)));
}

}  // namespace protocad::nn
