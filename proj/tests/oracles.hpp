#pragma once

// Reference computations written independently of the library code paths.

#include <cmath>
#include <functional>
#include <vector>

#include "protocad/tensor.hpp"

namespace oracle {

/// Central-difference gradient of a scalar function of one tensor's values.
inline std::vector<double> numeric_grad(protocad::Tensor& x, const std::function<double()>& f,
                                        double h = 1e-6) {
  std::vector<double> g(x.numel());
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto v = data[i];
    data[i] = v + h;
    const double fp = f();
    data[i] = v - h;
    const double fm = f();
    data[i] = v;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// KL(N(m1, s1^2) || N(m2, s2^2)) for one dimension.
inline double kl_normal(double m1, double s1, double m2, double s2) {
  return std::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2 * s2 * s2) - 0.5;
}

/// Lambda-return at index 0 by brute-force expansion over n-step returns.
inline double lambda_return_expanded(const std::vector<double>& r, const std::vector<double>& v,
                                     double gamma, double lambda) {
  const std::size_t H = v.size() - 1;
  auto vn = [&](std::size_t n) {
    const std::size_t h = std::min(n, H);
    double acc = 0;
    for (std::size_t k = 0; k < h; ++k) acc += std::pow(gamma, double(k)) * r[k];
    return acc + std::pow(gamma, double(h)) * v[h];
  };
  double out = 0;
  for (std::size_t n = 1; n + 1 <= H; ++n) out += (1 - lambda) * std::pow(lambda, double(n - 1)) * vn(n);
  return out + std::pow(lambda, double(H - 1)) * vn(H);
}

}  // namespace oracle
