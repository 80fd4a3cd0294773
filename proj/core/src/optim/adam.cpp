#include "semalign/optim/adam.hpp"

#include <cmath>
#include <string>

#include "semalign/common/errors.hpp"

namespace semalign {

Adam::Adam(AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw DataError("Adam learning rate must be positive");
  if (!(cfg_.beta1 > 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 > 0.0 && cfg_.beta2 < 1.0)) {
    throw DataError("Adam betas must lie in (0, 1)");
  }
}

void Adam::step(std::span<const ParamSlot> params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (params.size() != m_.size()) throw DataError("Adam: parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    if (p.value.size() != m_[k].size() || p.grad.size() != p.value.size()) {
      throw DataError("Adam: shape mismatch for parameter " + std::to_string(k));
    }
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      if (!std::isfinite(p.grad[i])) {
        throw DivergenceError("non-finite gradient in parameter " + std::to_string(k) + " at element " +
                              std::to_string(i));
      }
    }
  }

  ++step_;
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto value = params[k].value;
    auto grad = params[k].grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace semalign
