#include "protocad/proto_context.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace protocad {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full:
      return "full";
    case Ablation::no_projection:
      return "no_projection";
    case Ablation::plain_swav:
      return "plain_swav";
  }
  return "full";
}

Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no_projection") return Ablation::no_projection;
  if (s == "plain_swav") return Ablation::plain_swav;
  throw std::invalid_argument("unknown ablation '" + s +
                              "' (expected full, no_projection or plain_swav)");
}

void ProtoConfig::validate() const {
  if (num_prototypes < 2) throw std::invalid_argument("ProtoConfig: need at least 2 prototypes");
  if (dim == 0) throw std::invalid_argument("ProtoConfig: prototype dim must be positive");
  if (!(temperature > 0)) throw std::invalid_argument("ProtoConfig: temperature must be > 0");
  if (!(sinkhorn_eps > 0)) throw std::invalid_argument("ProtoConfig: sinkhorn_eps must be > 0");
  if (sinkhorn_iters < 1) throw std::invalid_argument("ProtoConfig: sinkhorn_iters must be >= 1");
  if (!(ema >= 0 && ema <= 1)) throw std::invalid_argument("ProtoConfig: ema must lie in [0, 1]");
}

Tensor assign_softmax(const Tensor& projections, const Tensor& prototypes, Scalar temperature) {
  if (projections.cols() != prototypes.cols())
    throw ShapeError("assign_softmax: projection dim " + std::to_string(projections.cols()) +
                     " vs prototype dim " + std::to_string(prototypes.cols()));
  return softmax(matmul(projections, transpose(prototypes)), 1, temperature);
}

Tensor sinkhorn_assign(const Tensor& projections, const Tensor& prototypes, Scalar eps, int iters) {
  if (projections.cols() != prototypes.cols())
    throw ShapeError("sinkhorn_assign: projection dim " + std::to_string(projections.cols()) +
                     " vs prototype dim " + std::to_string(prototypes.cols()));
  NoGradGuard no_grad;
  return sinkhorn_scores(matmul(projections, transpose(prototypes)), eps, iters);
}

Tensor sinkhorn_scores(const Tensor& scores, Scalar eps, int iters) {
  if (iters < 1) throw std::invalid_argument("sinkhorn: iters must be >= 1");
  if (!(eps > 0)) throw std::invalid_argument("sinkhorn: eps must be > 0");
  const std::size_t n = scores.rows();
  const std::size_t k = scores.cols();
  std::vector<Scalar> q(scores.data().begin(), scores.data().end());
  const Scalar mx = *std::max_element(q.begin(), q.end());
  for (auto& v : q) v = std::exp((v - mx) / eps);

  const Scalar tiny = std::numeric_limits<Scalar>::min();
  const Scalar col_target = static_cast<Scalar>(n) / static_cast<Scalar>(k);
  std::vector<Scalar> col(k);
  for (int it = 0; it < iters; ++it) {
    std::fill(col.begin(), col.end(), Scalar(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) col[j] += q[i * k + j];
    for (std::size_t j = 0; j < k; ++j) col[j] = col_target / std::max(col[j], tiny);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) q[i * k + j] *= col[j];
    for (std::size_t i = 0; i < n; ++i) {
      Scalar row = 0;
      for (std::size_t j = 0; j < k; ++j) row += q[i * k + j];
      const Scalar inv = Scalar(1) / std::max(row, tiny);
      for (std::size_t j = 0; j < k; ++j) q[i * k + j] *= inv;
    }
  }
  auto out = Tensor::from({n, k}, std::move(q));
  out.node()->op = "sinkhorn";
  return out;
}

Tensor temporal_crossover_loss(const Tensor& predicted, const Tensor& target, std::size_t seq_len,
                               Pairing pairing) {
  if (predicted.shape() != target.shape())
    throw ShapeError("temporal_crossover_loss: " + shape_str(predicted.shape()) + " vs " +
                     shape_str(target.shape()));
  if (seq_len == 0 || seq_len % 2 != 0)
    throw std::invalid_argument("temporal_crossover_loss: sequence length must be even, got " +
                                std::to_string(seq_len));
  const std::size_t rows = predicted.rows();
  if (rows % seq_len != 0)
    throw ShapeError("temporal_crossover_loss: " + std::to_string(rows) +
                     " rows is not a multiple of sequence length " + std::to_string(seq_len));
  TraceStage stage("tc_loss");
  Tensor paired = predicted;
  if (pairing == Pairing::crossed) {
    const std::size_t half = rows / 2;  // (M/2) * B rows
    paired = concat({slice(predicted, 0, half, rows), slice(predicted, 0, 0, half)}, 0);
  }
  const Tensor target_const = stop_gradient(target);
  return scale(mean(sum(mul(target_const, log(paired)), 1)), -1);
}

Tensor aggregate(const Tensor& weights, const Tensor& prototypes) {
  if (weights.cols() != prototypes.rows())
    throw ShapeError("aggregate: " + std::to_string(weights.cols()) + " weights vs " +
                     std::to_string(prototypes.rows()) + " prototypes");
  return matmul(weights, prototypes);
}

Tensor build_feature(const Tensor& s, const Tensor& u, const Tensor& e, Ablation mode) {
  if (s.rows() != e.rows() || (mode != Ablation::no_projection && s.rows() != u.rows()))
    throw ShapeError("build_feature: batch mismatch " + shape_str(s.shape()) + ", " +
                     shape_str(u.shape()) + ", " + shape_str(e.shape()));
  TraceStage stage("feature");
  if (mode == Ablation::no_projection) return concat({s, e}, 1);
  if (u.cols() != e.cols())
    throw ShapeError("build_feature: u and e widths differ (" + std::to_string(u.cols()) + " vs " +
                     std::to_string(e.cols()) + ")");
  return concat({s, u, e}, 1);
}

std::size_t feature_dim(std::size_t state_dim, std::size_t proto_dim, Ablation mode) {
  return state_dim + (mode == Ablation::no_projection ? 1 : 2) * proto_dim;
}

ProtoContext::ProtoContext(const ProtoConfig& cfg, std::size_t state_dim, ParamSet& projector,
                           ParamSet& target_projector, ParamSet& prototypes, Rng& rng)
    : cfg_(cfg), state_dim_(state_dim), projector_params_(&projector),
      target_params_(&target_projector) {
  cfg_.validate();
  online_ = nn::Linear::create(projector, "linear", state_dim, cfg.dim, rng);
  target_ = nn::Linear::create(target_projector, "linear", state_dim, cfg.dim, rng);
  target_projector.set_requires_grad(false);
  ema_update(target_projector, projector, 1.0);

  std::vector<Scalar> c(cfg.num_prototypes * cfg.dim);
  for (auto& v : c) v = static_cast<Scalar>(rng.normal());
  prototypes_ = prototypes.add("C", Tensor::from({cfg.num_prototypes, cfg.dim}, std::move(c)));
  renormalize_prototypes(rng);
}

Tensor ProtoContext::project(const Tensor& s, Branch branch) const {
  if (s.cols() != state_dim_)
    throw ShapeError("project: state width " + std::to_string(s.cols()) + ", expected " +
                     std::to_string(state_dim_));
  if (branch == Branch::target) {
    NoGradGuard no_grad;
    return l2_normalize(target_(s), 1);
  }
  return l2_normalize(online_(s), 1);
}

ProtoContext::Context ProtoContext::context(const Tensor& s) const {
  Context c;
  c.u = project(s, Branch::online);
  c.w = assign_softmax(c.u, prototypes_, static_cast<Scalar>(cfg_.temperature));
  c.e = aggregate(c.w, prototypes_);
  return c;
}

Tensor ProtoContext::feature(const Tensor& s, Ablation mode) const {
  const Context c = context(s);
  return build_feature(s, c.u, c.e, mode);
}

void ProtoContext::update_target() { ema_update(*target_params_, *projector_params_, cfg_.ema); }

int ProtoContext::renormalize_prototypes(Rng& rng) {
  int redrawn = 0;
  auto c = prototypes_.mutable_data();
  const std::size_t d = cfg_.dim;
  for (std::size_t k = 0; k < cfg_.num_prototypes; ++k) {
    auto row = c.subspan(k * d, d);
    double ss = 0;
    for (Scalar v : row) ss += static_cast<double>(v) * v;
    while (!(ss > 0) || !std::isfinite(ss)) {
      ss = 0;
      for (auto& v : row) {
        v = static_cast<Scalar>(rng.normal());
        ss += static_cast<double>(v) * v;
      }
      ++redrawn;
      std::clog << "protocad: prototype " << k << " had zero norm, redrawn\n";
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (auto& v : row) v = static_cast<Scalar>(v * inv);
  }
  return redrawn;
}

}  // namespace protocad
