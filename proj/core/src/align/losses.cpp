#include "semalign/align/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semalign/common/errors.hpp"
#include "semalign/common/random.hpp"

namespace semalign {
namespace {

struct Normalized {
  Matrix unit;
  Vector norms;  // after clamping
};

Normalized normalize_rows(const Matrix& m, const char* what) {
  Normalized out{Matrix(m.rows(), m.cols()), Vector(m.rows())};
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n == 0.0) {
      throw DivergenceError(std::string("degenerate embedding: zero-norm ") + what + " row " + std::to_string(r));
    }
    if (!std::isfinite(n)) throw DivergenceError(std::string("non-finite ") + what + " row " + std::to_string(r));
    out.norms(r) = std::max(n, kCosineEps);
    out.unit.row(r) = m.row(r) / out.norms(r);
  }
  return out;
}

// Gradient w.r.t. the raw rows given the gradient w.r.t. the unit rows.
Matrix normalize_backward(const Normalized& n, const Matrix& grad_unit, const Matrix& raw) {
  Matrix g(grad_unit.rows(), grad_unit.cols());
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    if (raw.row(r).norm() < kCosineEps) {
      g.row(r) = grad_unit.row(r) / n.norms(r);
    } else {
      const double proj = grad_unit.row(r).dot(n.unit.row(r));
      g.row(r) = (grad_unit.row(r) - proj * n.unit.row(r)) / n.norms(r);
    }
  }
  return g;
}


// Turns `work` (logits scaled by `scale`) into the InfoNCE gradient w.r.t. the
// unscaled logits, in place. Row losses are written to `row_losses`.
double softmax_cross_entropy_inplace(Matrix& work, double scale, std::vector<double>& row_losses) {
  const auto n = work.rows();
  row_losses.resize(static_cast<std::size_t>(n));
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto row = work.row(i).array();
    row *= scale;
    const double diag = row(i);
    const double mx = row.maxCoeff();
    row = (row - mx).exp();
    const double z = row.sum();
    const double li = mx + std::log(z) - diag;
    row_losses[static_cast<std::size_t>(i)] = li;
    total += li;
    row *= scale * inv_n / z;
    row(i) -= scale * inv_n;
  }
  const double loss = total * inv_n;
  if (!std::isfinite(loss)) throw DivergenceError("InfoNCE loss is not finite");
  return loss;
}

}  // namespace

LogitLoss info_nce_from_logits(const Matrix& logits) {
  const auto n = logits.rows();
  if (n < 1 || logits.cols() != n) throw DataError("InfoNCE needs a square logit matrix");
  LogitLoss out;
  out.grad_logits = logits;
  out.loss = softmax_cross_entropy_inplace(out.grad_logits, 1.0, out.row_losses);
  return out;
}

InfoNceResult info_nce(const Matrix& anchors, const Matrix& candidates, double tau) {
  if (anchors.rows() != candidates.rows() || anchors.cols() != candidates.cols()) {
    throw DataError("InfoNCE: anchors and candidates must have the same shape");
  }
  if (anchors.rows() < 2) throw DataError("InfoNCE needs at least two pairs");
  if (!(tau > 0.0)) throw DataError("InfoNCE temperature must be positive");
  const auto a = normalize_rows(anchors, "anchor");
  const auto c = normalize_rows(candidates, "candidate");
  // Cosine matrix, then gradient w.r.t. the cosines.
  Matrix work;
  work.noalias() = a.unit * c.unit.transpose();
  InfoNceResult out;
  out.loss = softmax_cross_entropy_inplace(work, 1.0 / tau, out.row_losses);
  Matrix grad_unit;
  grad_unit.noalias() = work * c.unit;
  out.grad_anchors = normalize_backward(a, grad_unit, anchors);
  grad_unit.noalias() = work.transpose() * a.unit;
  out.grad_candidates = normalize_backward(c, grad_unit, candidates);
  return out;
}

AlignmentLoss contrastive_info_loss(const Matrix& e_batch, const Matrix& s_batch, const AdapterNet& down, double tau) {
  if (e_batch.rows() != s_batch.rows()) throw DataError("contrastive loss: E and S row counts differ");
  AdapterCache cache;
  const Matrix projected = adapter_forward(down, s_batch, &cache);
  auto nce = info_nce(e_batch, projected, tau);
  AlignmentLoss out;
  out.loss = nce.loss;
  out.row_losses = std::move(nce.row_losses);
  out.grad_e = std::move(nce.grad_anchors);
  out.adapter = AdapterGrads::zeros_like(down);
  adapter_backward(down, cache, nce.grad_candidates, out.adapter);
  return out;
}

std::optional<AlignmentLoss> generative_info_loss(const Matrix& e_masked, const Matrix& s_masked, const AdapterNet& up,
                                                  double tau) {
  if (e_masked.rows() != s_masked.rows()) throw DataError("generative loss: E and S row counts differ");
  if (e_masked.rows() < 2) return std::nullopt;
  AdapterCache cache;
  const Matrix reconstructed = adapter_forward(up, e_masked, &cache);
  auto nce = info_nce(reconstructed, s_masked, tau);
  AlignmentLoss out;
  out.loss = nce.loss;
  out.row_losses = std::move(nce.row_losses);
  out.adapter = AdapterGrads::zeros_like(up);
  out.grad_e = adapter_backward(up, cache, nce.grad_anchors, out.adapter);
  return out;
}

MaskResult mask_entities(const EmbeddingTable& x, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DataError("mask ratio must lie in [0, 1]");
  const std::size_t n = x.num_entities();
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  MaskResult out{x.values, {}};
  if (count == 0) return out;
  std::vector<std::uint32_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0U);
  auto rng = make_rng(seed, "mask");
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(rows[k], rows[pick(rng)]);
  }
  rows.resize(count);
  std::sort(rows.begin(), rows.end());
  const auto mask = x.mask_row();
  for (auto r : rows) out.table.row(r) = mask;
  out.masked = std::move(rows);
  return out;
}

double total_loss(double rec_loss, double info_loss, double lambda) { return rec_loss + lambda * info_loss; }

}  // namespace semalign
