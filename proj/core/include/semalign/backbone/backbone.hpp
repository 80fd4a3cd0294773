#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semalign/common/linalg.hpp"
#include "semalign/common/random.hpp"
#include "semalign/corpus/interactions.hpp"
#include "semalign/corpus/split.hpp"

namespace semalign {

/// Initial embeddings x: users first, then items, then one learnable
/// mask-token row used only by generative alignment.
struct EmbeddingTable {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  Matrix values;  // (I + J + 1) x d_e

  static EmbeddingTable random(std::size_t num_users, std::size_t num_items, std::size_t dim, double init_std,
                               std::uint64_t seed);

  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
  std::size_t num_entities() const { return num_users + num_items; }
  std::size_t mask_index() const { return num_entities(); }

  /// The user and item rows, without the mask token.
  auto entities() const { return values.topRows(static_cast<Eigen::Index>(num_entities())); }
  auto mask_row() const { return values.row(static_cast<Eigen::Index>(mask_index())); }
};

enum class BackboneKind { lightgcn, gccf };

std::string_view to_string(BackboneKind kind);
BackboneKind backbone_from_string(std::string_view name);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::lightgcn;
  int layers = 3;
  double l2_weight = 1e-4;
};

/// Width of the encoded representation: d_e for LightGCN, (L+1) d_e for GCCF.
std::size_t output_dim(const BackboneConfig& cfg, std::size_t embedding_dim);

/// Propagates initial embeddings (one row per user/item) over the normalized
/// adjacency. LightGCN averages the L+1 layer outputs; GCCF concatenates them.
Matrix encode(const Matrix& x, const NormalizedAdjacency& adj, const BackboneConfig& cfg);

/// Transposed Jacobian of `encode` applied to a gradient w.r.t. its output.
/// Because the adjacency is symmetric this is another propagation.
Matrix encode_backward(const Matrix& grad_e, const NormalizedAdjacency& adj, const BackboneConfig& cfg);

struct Triple {
  std::uint32_t user = 0;
  std::uint32_t pos = 0;  // item index
  std::uint32_t neg = 0;  // item index

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct BprTerms {
  double loss = 0.0;
  Matrix grad_e;  // same shape as e
  Matrix grad_x;  // L2 term only, same shape as x
};

/// Mean over the batch of -ln sigmoid(e_u.e_pos - e_u.e_neg) plus
/// l2_weight * (|x_u|^2 + |x_pos|^2 + |x_neg|^2) averaged over the batch.
/// `e` and `x` hold one row per user then item.
BprTerms bpr_terms(const Matrix& e, std::span<const Triple> batch, double l2_weight, const Matrix& x,
                   std::size_t num_users);

struct BprObjective {
  double loss = 0.0;
  Matrix grad_x;
};

/// BPR through the encoder: loss and gradient w.r.t. the initial embeddings.
BprObjective bpr_loss(const Matrix& x, const NormalizedAdjacency& adj, const BackboneConfig& cfg,
                      std::span<const Triple> batch);

/// Uniform (user, positive, negative) sampler over a training set.
class BatchSampler {
 public:
  BatchSampler(const InteractionSet& train, std::uint64_t seed);

  std::vector<Triple> sample(std::size_t batch_size);
  std::size_t batches_per_epoch(std::size_t batch_size) const;

 private:
  std::size_t num_items_ = 0;
  std::size_t num_edges_ = 0;
  std::vector<std::vector<std::uint32_t>> items_;  // sorted, per user
  std::vector<std::uint32_t> candidates_;          // users with 1 <= degree < J
  Rng rng_;
};

/// score(u, v) = e_u . e_v for every user/item pair.
Matrix score_all(const Matrix& e, std::size_t num_users);

}  // namespace semalign
