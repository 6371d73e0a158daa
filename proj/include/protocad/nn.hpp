#pragma once

#include <string>
#include <vector>

#include "protocad/optim.hpp"
#include "protocad/rng.hpp"
#include "protocad/tensor.hpp"

namespace protocad::nn {

/// Glorot-uniform weights [in, out], zero bias [1, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear create(ParamSet& params, const std::string& name, std::size_t in,
                       std::size_t out, Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

/// `depth` hidden ELU layers of width `hidden`, then a linear output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamSet& params, const std::string& name, std::size_t in, std::size_t hidden,
      std::size_t depth, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }

 private:
  std::vector<Linear> layers_;
};

/// Standard GRU cell with fused gate matrices (reset, update, candidate).
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParamSet& params, const std::string& name, std::size_t in, std::size_t hidden,
          Rng& rng);

  Tensor operator()(const Tensor& x, const Tensor& h) const;
  std::size_t hidden_dim() const { return hidden_; }

 private:
  std::size_t hidden_ = 0;
  Linear input_;
  Linear recurrent_;
};

}  // namespace protocad::nn
