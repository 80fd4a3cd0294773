#pragma once

#include <cstddef>
#include <cstdint>

#include "semalign/common/linalg.hpp"

namespace semalign {

enum class AdapterDirection {
  down,  // semantic space (d_s) -> representation space (d_out)
  up,    // representation space (d_out) -> semantic space (d_s)
};

enum class Activation { leaky_relu, identity };

inline constexpr double kLeakySlope = 0.01;

/// One-hidden-layer perceptron: out = W2 act(W1 in + b1) + b2.
/// Hidden width is floor((d_s + d_out) / 2).
struct AdapterNet {
  AdapterDirection direction = AdapterDirection::down;
  Activation activation = Activation::leaky_relu;
  Matrix w1;  // hidden x in
  Vector b1;
  Matrix w2;  // out x hidden
  Vector b2;

  /// Xavier-uniform weights, zero biases.
  static AdapterNet create(AdapterDirection direction, std::size_t semantic_dim, std::size_t repr_dim,
                           std::uint64_t seed);

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(w2.rows()); }
};

std::size_t adapter_hidden_width(std::size_t semantic_dim, std::size_t repr_dim);

struct AdapterGrads {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  static AdapterGrads zeros_like(const AdapterNet& net);
  AdapterGrads& operator+=(const AdapterGrads& other);
  AdapterGrads& operator*=(double s);
};

/// Intermediates kept by the forward pass for backpropagation.
struct AdapterCache {
  Matrix input;
  Matrix pre;     // W1 in + b1
  Matrix hidden;  // act(pre)
};

/// Row-batched forward pass: one input vector per row.
Matrix adapter_forward(const AdapterNet& net, const Matrix& input, AdapterCache* cache = nullptr);

/// Accumulates parameter gradients into `grads` and returns the gradient
/// w.r.t. the input rows.
Matrix adapter_backward(const AdapterNet& net, const AdapterCache& cache, const Matrix& grad_out,
                        AdapterGrads& grads);

}  // namespace semalign
