#pragma once

#include <string>

#include "protocad/nn.hpp"
#include "protocad/optim.hpp"
#include "protocad/rng.hpp"
#include "protocad/tensor.hpp"

namespace protocad {

/// Training variants: the full model, x = (s, e) without the projection
/// embedding, and the non-crossed (time-aligned) SwAV pairing.
enum class Ablation { full, no_projection, plain_swav };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);

/// How predicted and target assignments are paired in time.
enum class Pairing { crossed, aligned };

struct ProtoConfig {
  std::size_t num_prototypes = 32;  // K
  std::size_t dim = 32;             // D
  double temperature = 0.1;
  double sinkhorn_eps = 0.05;
  int sinkhorn_iters = 3;
  double ema = 0.05;

  void validate() const;
};

/// softmax(U C^T / T) row-wise; differentiable in U and C.
Tensor assign_softmax(const Tensor& projections, const Tensor& prototypes, Scalar temperature);

/// Sinkhorn-Knopp on a raw [N, K] score matrix: Q = exp((S - max S) / eps),
/// then per iteration columns are scaled to sum N/K and rows to sum 1.
/// The result carries no gradient.
Tensor sinkhorn_scores(const Tensor& scores, Scalar eps, int iters);

/// Balanced soft assignments from Q = exp(U C^T / eps): each iteration scales
/// columns to sum N/K then rows to sum 1. The result carries no gradient.
Tensor sinkhorn_assign(const Tensor& projections, const Tensor& prototypes, Scalar eps, int iters);

/// Cross-entropy between target and predicted assignments, both [M*B, K]
/// in time-major row order (row = t*B + b). Crossed pairing matches targets
/// of the first half with predictions of the second half at the same offset
/// and vice versa; aligned pairing matches equal time steps. Averaged over
/// all M*B target rows. seq_len must be even.
Tensor temporal_crossover_loss(const Tensor& predicted, const Tensor& target,
                               std::size_t seq_len, Pairing pairing = Pairing::crossed);

/// e = W C, a convex combination of prototype rows per sample.
Tensor aggregate(const Tensor& weights, const Tensor& prototypes);

/// x = (s, u, e), or (s, e) under Ablation::no_projection.
Tensor build_feature(const Tensor& s, const Tensor& u, const Tensor& e, Ablation mode);
std::size_t feature_dim(std::size_t state_dim, std::size_t proto_dim, Ablation mode);

/// Online projector, EMA target projector and prototype bank.
class ProtoContext {
 public:
  enum class Branch { online, target };

  struct Context {
    Tensor u;  // projection embedding
    Tensor w;  // softmax assignment
    Tensor e;  // aggregated prototype
  };

  ProtoContext(const ProtoConfig& cfg, std::size_t state_dim, ParamSet& projector,
               ParamSet& target_projector, ParamSet& prototypes, Rng& init_rng);

  const ProtoConfig& config() const { return cfg_; }
  std::size_t state_dim() const { return state_dim_; }

  /// l2-normalized linear projection. The target branch never records a graph.
  Tensor project(const Tensor& s, Branch branch = Branch::online) const;
  const Tensor& prototypes() const { return prototypes_; }

  Context context(const Tensor& s) const;
  /// The single feature path shared by training, imagination and acting.
  Tensor feature(const Tensor& s, Ablation mode) const;

  void update_target();
  /// Rescales prototype rows to unit norm; zero rows are redrawn from a
  /// seeded Gaussian. Returns the number of redrawn rows.
  int renormalize_prototypes(Rng& rng);

 private:
  ProtoConfig cfg_;
  std::size_t state_dim_;
  ParamSet* projector_params_;
  ParamSet* target_params_;
  nn::Linear online_;
  nn::Linear target_;
  Tensor prototypes_;
};

}  // namespace protocad
