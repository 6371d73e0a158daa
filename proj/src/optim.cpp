#include "protocad/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace protocad {

Tensor ParamSet::add(std::string name, Tensor t) {
  if (contains(name)) throw std::invalid_argument("ParamSet '" + group_ + "': duplicate name " + name);
  t.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), t, {}});
  return t;
}

const Tensor& ParamSet::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::out_of_range("ParamSet '" + group_ + "': no tensor named " + std::string(name));
  return entries_[it->second].tensor;
}

std::size_t ParamSet::num_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamSet::clear_grads() {
  for (auto& e : entries_) e.tensor.clear_grad();
}

void ParamSet::set_requires_grad(bool on) {
  for (auto& e : entries_) e.tensor.set_requires_grad(on);
}

ParamSet ParamSet::clone(std::string group) const {
  ParamSet out(std::move(group));
  for (const auto& e : entries_) out.add(e.name, e.tensor.detach());
  return out;
}

double adam_step(std::span<ParamSet* const> groups, const AdamConfig& cfg) {
  double sq = 0;
  for (ParamSet* g : groups) {
    for (auto& e : g->entries()) {
      if (!e.tensor.has_grad())
        throw std::runtime_error("adam_step: missing gradient for " + g->group() + "/" + e.name);
      for (Scalar v : e.tensor.grad()) sq += static_cast<double>(v) * v;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = (cfg.clip_norm > 0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;

  for (ParamSet* g : groups) {
    for (auto& e : g->entries()) {
      auto& s = e.slot;
      const std::size_t n = e.tensor.numel();
      if (s.m.size() != n) {
        s.m.assign(n, 0);
        s.v.assign(n, 0);
        s.step = 0;
      }
      ++s.step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
      auto w = e.tensor.mutable_data();
      const auto grad = e.tensor.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = grad[i] * clip;
        s.m[i] = static_cast<Scalar>(cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * gi);
        s.v[i] = static_cast<Scalar>(cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * gi * gi);
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        w[i] = static_cast<Scalar>(w[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
      }
      e.tensor.clear_grad();
    }
  }
  return norm;
}

double adam_step(std::initializer_list<ParamSet*> groups, const AdamConfig& cfg) {
  return adam_step(std::span<ParamSet* const>(groups.begin(), groups.size()), cfg);
}

double adam_step(ParamSet& params, const AdamConfig& cfg) { return adam_step({&params}, cfg); }

void ema_update(ParamSet& target, const ParamSet& online, double eta) {
  if (target.size() != online.size())
    throw std::invalid_argument("ema_update: groups differ in size (" +
                                std::to_string(target.size()) + " vs " +
                                std::to_string(online.size()) + ")");
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto& t = target.entries()[i];
    const auto& o = online.entries()[i];
    if (t.name != o.name || t.tensor.shape() != o.tensor.shape())
      throw std::invalid_argument("ema_update: mismatch at " + t.name + shape_str(t.tensor.shape()) +
                                  " vs " + o.name + shape_str(o.tensor.shape()));
    auto dst = t.tensor.mutable_data();
    const auto src = o.tensor.data();
    const auto keep = static_cast<Scalar>(1.0 - eta);
    const auto take = static_cast<Scalar>(eta);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = keep * dst[k] + take * src[k];
  }
}

FreezeGuard::FreezeGuard(std::initializer_list<ParamSet*> groups) {
  for (ParamSet* g : groups)
    for (auto& e : g->entries()) {
      saved_.emplace_back(e.tensor, e.tensor.requires_grad());
      e.tensor.set_requires_grad(false);
    }
}

FreezeGuard::~FreezeGuard() {
  for (auto& [t, flag] : saved_) t.set_requires_grad(flag);
}

}  // namespace protocad
