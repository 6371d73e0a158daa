#pragma once

#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protocad/tensor.hpp"

namespace protocad {

struct AdamSlot {
  std::vector<Scalar> m;
  std::vector<Scalar> v;
  std::int64_t step = 0;
};

/// Named trainable tensors with fixed insertion order and per-tensor Adam state.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    AdamSlot slot;
  };

  explicit ParamSet(std::string group = {}) : group_(std::move(group)) {}

  /// Registers a tensor as trainable; names must be unique.
  Tensor add(std::string name, Tensor t);
  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }
  std::size_t size() const { return entries_.size(); }
  std::size_t num_values() const;
  const std::string& group() const { return group_; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void clear_grads();
  void set_requires_grad(bool on);
  /// Deep copy of values (fresh tensors, empty optimizer state).
  ParamSet clone(std::string group) const;

 private:
  std::string group_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;
  double clip_norm = 100.0;
};

/// One Adam update over all listed groups, with a single global-norm clip.
/// Every registered tensor must carry a gradient. Gradients are cleared
/// afterwards. Returns the pre-clip global gradient norm.
double adam_step(std::span<ParamSet* const> groups, const AdamConfig& cfg);
double adam_step(std::initializer_list<ParamSet*> groups, const AdamConfig& cfg);
double adam_step(ParamSet& params, const AdamConfig& cfg);

/// target <- (1 - eta) * target + eta * online, no graph recorded.
void ema_update(ParamSet& target, const ParamSet& online, double eta);

/// Marks parameter groups as constants for the guard's lifetime.
class FreezeGuard {
 public:
  FreezeGuard(std::initializer_list<ParamSet*> groups);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<std::pair<Tensor, bool>> saved_;
};

}  // namespace protocad
