#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "protocad/tensor.hpp"

namespace protocad {

struct CheckResult {
  std::string suite;
  std::string property;
  bool pass = false;
  double observed = 0;
  double expected = 0;
  double tolerance = 0;
};

struct CheckReport {
  std::vector<CheckResult> results;

  bool ok() const;
  void add(std::string suite, std::string property, double observed, double expected, double tolerance);
  /// Records a boolean property (observed 1 = holds).
  void add_flag(std::string suite, std::string property, bool holds);
  /// One line per suite with pass counts, then every failure with observed
  /// and expected values.
  std::string table() const;
};

struct CheckOptions {
  std::uint64_t seed = 7;
  /// Test fixture: the reward head reads the full feature x instead of s.
  bool broken_reward_wiring = false;
};

/// Largest per-tensor relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// between reverse-mode gradients and central differences.
struct GradCheck {
  double max_rel_error = 0;
  std::string worst;
};
GradCheck gradcheck(const std::function<Tensor()>& loss, std::span<const Tensor> params,
                    double step = 1e-5);

void check_primitive_gradients(CheckReport& report, std::uint64_t seed);
void check_loss_gradients(CheckReport& report, std::uint64_t seed);
void check_lambda_returns(CheckReport& report, std::uint64_t seed);
void check_sinkhorn(CheckReport& report, std::uint64_t seed);
void check_crossover(CheckReport& report);
void check_isolation(CheckReport& report, const CheckOptions& options);

/// All suites above.
CheckReport run_checks(const CheckOptions& options = {});

}  // namespace protocad
