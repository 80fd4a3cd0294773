#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "semalign/align/adapter.hpp"
#include "semalign/backbone/backbone.hpp"
#include "semalign/common/linalg.hpp"

namespace semalign {

/// Norms below this are clamped before dividing; an exactly zero norm is an error.
inline constexpr double kCosineEps = 1e-12;

struct LogitLoss {
  double loss = 0.0;
  std::vector<double> row_losses;  // -ln softmax(logits_i)_i
  Matrix grad_logits;
};

/// Row-wise softmax cross-entropy with the diagonal as the positive class,
/// averaged over rows.
LogitLoss info_nce_from_logits(const Matrix& logits);

struct InfoNceResult {
  double loss = 0.0;
  std::vector<double> row_losses;
  Matrix grad_anchors;
  Matrix grad_candidates;
};

/// InfoNCE with f(j, i) = exp(cos(candidate_j, anchor_i) / tau): row i of
/// `anchors` is paired with row i of `candidates`, every other candidate row
/// is a negative.
InfoNceResult info_nce(const Matrix& anchors, const Matrix& candidates, double tau);

struct AlignmentLoss {
  double loss = 0.0;
  std::vector<double> row_losses;
  Matrix grad_e;  // w.r.t. the representation rows passed in
  AdapterGrads adapter;
};

/// Contrastive alignment: anchors are e_i, candidates are down(s_j).
AlignmentLoss contrastive_info_loss(const Matrix& e_batch, const Matrix& s_batch, const AdapterNet& down, double tau);

/// Generative alignment over masked entities: anchors are up(e_hat_i),
/// candidates are s_j. Returns nothing when fewer than two rows are given,
/// since there is no negative to contrast against.
std::optional<AlignmentLoss> generative_info_loss(const Matrix& e_masked, const Matrix& s_masked,
                                                  const AdapterNet& up, double tau);

struct MaskResult {
  Matrix table;                        // copy of x.values with masked rows replaced
  std::vector<std::uint32_t> masked;   // sorted entity rows (users, then I + item)
};

/// Replaces round(ratio * (I + J)) distinct entity rows by the mask-token row.
MaskResult mask_entities(const EmbeddingTable& x, double ratio, std::uint64_t seed);

/// L = L_rec + lambda * L_info.
double total_loss(double rec_loss, double info_loss, double lambda);

}  // namespace semalign
