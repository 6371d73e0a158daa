#pragma once

#include "protocad/rng.hpp"
#include "protocad/tensor.hpp"

namespace protocad {

/// Lower bound added after softplus when building a std from raw outputs.
inline constexpr Scalar kMinStd = static_cast<Scalar>(0.1);

/// Diagonal Gaussian over the columns of [batch, dim] tensors.
struct DiagGaussian {
  Tensor mean;
  Tensor std;

  /// std = softplus(raw_std) + min_std.
  static DiagGaussian from_raw(const Tensor& mean, const Tensor& raw_std,
                               Scalar min_std = kMinStd);
  /// Splits [batch, 2d] into mean and raw std halves.
  static DiagGaussian from_params(const Tensor& params, Scalar min_std = kMinStd);

  std::size_t dim() const { return mean.cols(); }
};

/// mean + std * noise; differentiable in mean and std.
Tensor sample_reparameterized(const DiagGaussian& d, const Tensor& noise);
/// Log density summed over the event dimension -> [batch, 1].
Tensor log_prob(const DiagGaussian& d, const Tensor& value);
/// KL(q || p) summed over the event dimension -> [batch, 1].
Tensor kl_divergence(const DiagGaussian& q, const DiagGaussian& p);

}  // namespace protocad

namespace protocad {

/// Deterministic source of standard-normal noise tensors. Two tapes built
/// from the same seed yield identical sequences.
class NoiseTape {
 public:
  explicit NoiseTape(std::uint64_t seed) : rng_(seed) {}
  Tensor normal(std::size_t rows, std::size_t cols);

 private:
  Rng rng_;
};

}  // namespace protocad
