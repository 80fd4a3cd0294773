#include "semalign/backbone/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "semalign/common/errors.hpp"

namespace semalign {

EmbeddingTable EmbeddingTable::random(std::size_t num_users, std::size_t num_items, std::size_t dim,
                                      double init_std, std::uint64_t seed) {
  if (dim == 0) throw DataError("embedding dimension must be positive");
  EmbeddingTable t;
  t.num_users = num_users;
  t.num_items = num_items;
  t.values.resize(static_cast<Eigen::Index>(num_users + num_items + 1), static_cast<Eigen::Index>(dim));
  auto rng = make_rng(seed, "embedding-init");
  std::normal_distribution<double> normal(0.0, init_std);
  for (Eigen::Index i = 0; i < t.values.size(); ++i) t.values.data()[i] = normal(rng);
  return t;
}

std::string_view to_string(BackboneKind kind) {
  return kind == BackboneKind::lightgcn ? "lightgcn" : "gccf";
}

BackboneKind backbone_from_string(std::string_view name) {
  if (name == "lightgcn") return BackboneKind::lightgcn;
  if (name == "gccf") return BackboneKind::gccf;
  throw DataError("unknown backbone '" + std::string(name) + "' (expected lightgcn or gccf)");
}

std::size_t output_dim(const BackboneConfig& cfg, std::size_t embedding_dim) {
  return cfg.kind == BackboneKind::lightgcn ? embedding_dim
                                            : embedding_dim * static_cast<std::size_t>(cfg.layers + 1);
}

Matrix encode(const Matrix& x, const NormalizedAdjacency& adj, const BackboneConfig& cfg) {
  if (static_cast<std::size_t>(x.rows()) != adj.num_nodes()) {
    throw DataError("encode: embedding rows do not match adjacency size");
  }
  const auto d = x.cols();
  if (cfg.kind == BackboneKind::lightgcn) {
    Matrix sum = x;
    Matrix layer = x;
    for (int l = 0; l < cfg.layers; ++l) {
      Matrix next = adj.matrix * layer;
      layer.swap(next);
      sum += layer;
    }
    sum /= static_cast<double>(cfg.layers + 1);
    return sum;
  }
  Matrix out(x.rows(), d * (cfg.layers + 1));
  out.leftCols(d) = x;
  Matrix layer = x;
  for (int l = 1; l <= cfg.layers; ++l) {
    Matrix next = adj.matrix * layer;
    layer.swap(next);
    out.middleCols(l * d, d) = layer;
  }
  return out;
}

Matrix encode_backward(const Matrix& grad_e, const NormalizedAdjacency& adj, const BackboneConfig& cfg) {
  if (cfg.kind == BackboneKind::lightgcn) {
    // Same linear map as the forward pass: (1/(L+1)) sum_l A^l g.
    return encode(grad_e, adj, cfg);
  }
  const auto d = grad_e.cols() / (cfg.layers + 1);
  // Horner: A(...A(A g_L + g_{L-1})...) + g_0.
  Matrix acc = grad_e.middleCols(cfg.layers * d, d);
  for (int l = cfg.layers - 1; l >= 0; --l) {
    Matrix next = adj.matrix * acc;
    next += grad_e.middleCols(l * d, d);
    acc.swap(next);
  }
  return acc;
}

BprTerms bpr_terms(const Matrix& e, std::span<const Triple> batch, double l2_weight, const Matrix& x,
                   std::size_t num_users) {
  BprTerms out;
  out.grad_e = Matrix::Zero(e.rows(), e.cols());
  out.grad_x = Matrix::Zero(x.rows(), x.cols());
  if (batch.empty()) return out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const auto nu = static_cast<Eigen::Index>(num_users);
  double loss = 0.0;
  double reg = 0.0;
  for (const auto& t : batch) {
    const Eigen::Index u = t.user;
    const Eigen::Index p = nu + t.pos;
    const Eigen::Index n = nu + t.neg;
    const double diff = e.row(u).dot(e.row(p) - e.row(n));
    // -ln sigmoid(diff) = softplus(-diff), evaluated stably.
    loss += std::max(-diff, 0.0) + std::log1p(std::exp(-std::abs(diff)));
    const double g = -inv_b / (1.0 + std::exp(diff));  // d loss / d diff
    out.grad_e.row(u) += g * (e.row(p) - e.row(n));
    out.grad_e.row(p) += g * e.row(u);
    out.grad_e.row(n) -= g * e.row(u);
    if (l2_weight != 0.0) {
      reg += x.row(u).squaredNorm() + x.row(p).squaredNorm() + x.row(n).squaredNorm();
      const double c = 2.0 * l2_weight * inv_b;
      out.grad_x.row(u) += c * x.row(u);
      out.grad_x.row(p) += c * x.row(p);
      out.grad_x.row(n) += c * x.row(n);
    }
  }
  out.loss = loss * inv_b + l2_weight * reg * inv_b;
  if (!std::isfinite(out.loss)) {
    throw DivergenceError("BPR loss is not finite (loss term " + std::to_string(loss * inv_b) + ", l2 term " +
                          std::to_string(reg * inv_b) + ")");
  }
  return out;
}

BprObjective bpr_loss(const Matrix& x, const NormalizedAdjacency& adj, const BackboneConfig& cfg,
                      std::span<const Triple> batch) {
  const Matrix e = encode(x, adj, cfg);
  auto terms = bpr_terms(e, batch, cfg.l2_weight, x, adj.num_users);
  BprObjective out;
  out.loss = terms.loss;
  out.grad_x = encode_backward(terms.grad_e, adj, cfg) + terms.grad_x;
  return out;
}

BatchSampler::BatchSampler(const InteractionSet& train, std::uint64_t seed)
    : num_items_(train.num_items()),
      num_edges_(train.edges.size()),
      items_(train.items_by_user()),
      rng_(derive_seed(seed, "batch-sampler")) {
  for (std::uint32_t u = 0; u < items_.size(); ++u) {
    if (!items_[u].empty() && items_[u].size() < num_items_) candidates_.push_back(u);
  }
  if (candidates_.empty()) throw DataError("no user has both a positive and a negative item to sample");
}

std::size_t BatchSampler::batches_per_epoch(std::size_t batch_size) const {
  return std::max<std::size_t>(1, (num_edges_ + batch_size - 1) / batch_size);
}

std::vector<Triple> BatchSampler::sample(std::size_t batch_size) {
  // Users who interact with every item are excluded up front, which is the
  // same as resampling whenever one is drawn.
  std::vector<Triple> batch;
  batch.reserve(batch_size);
  std::uniform_int_distribution<std::size_t> pick_user(0, candidates_.size() - 1);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const auto u = candidates_[pick_user(rng_)];
    const auto& pos_items = items_[u];
    std::uniform_int_distribution<std::size_t> pick_pos(0, pos_items.size() - 1);
    const auto pos = pos_items[pick_pos(rng_)];
    // Draw a rank among the J - deg(u) negatives and map it to an item id.
    std::uniform_int_distribution<std::size_t> pick_rank(0, num_items_ - pos_items.size() - 1);
    std::size_t rank = pick_rank(rng_);
    std::uint32_t neg = static_cast<std::uint32_t>(rank);
    for (auto p : pos_items) {
      if (p <= neg) {
        ++neg;
      } else {
        break;
      }
    }
    batch.push_back({u, pos, neg});
  }
  return batch;
}

Matrix score_all(const Matrix& e, std::size_t num_users) {
  const auto nu = static_cast<Eigen::Index>(num_users);
  return e.topRows(nu) * e.bottomRows(e.rows() - nu).transpose();
}

}  // namespace semalign
