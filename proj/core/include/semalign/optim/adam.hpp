#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace semalign {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// A trainable tensor viewed as a flat array, with its gradient.
struct ParamSlot {
  std::span<double> value;
  std::span<const double> grad;
};

/// Bias-corrected Adam. Moment buffers are created on the first step and the
/// slot list must keep the same shapes afterwards.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {});

  /// Throws DivergenceError (leaving parameters untouched) on a non-finite gradient.
  void step(std::span<const ParamSlot> params);

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace semalign
