#include "semalign/align/adapter.hpp"

#include <cmath>

#include "semalign/common/errors.hpp"
#include "semalign/common/random.hpp"

namespace semalign {

std::size_t adapter_hidden_width(std::size_t semantic_dim, std::size_t repr_dim) {
  return (semantic_dim + repr_dim) / 2;
}

AdapterNet AdapterNet::create(AdapterDirection direction, std::size_t semantic_dim, std::size_t repr_dim,
                              std::uint64_t seed) {
  if (semantic_dim == 0 || repr_dim == 0) throw DataError("adapter dimensions must be positive");
  const auto in = static_cast<Eigen::Index>(direction == AdapterDirection::down ? semantic_dim : repr_dim);
  const auto out = static_cast<Eigen::Index>(direction == AdapterDirection::down ? repr_dim : semantic_dim);
  const auto hidden = static_cast<Eigen::Index>(adapter_hidden_width(semantic_dim, repr_dim));

  AdapterNet net;
  net.direction = direction;
  auto rng = make_rng(seed, direction == AdapterDirection::down ? "adapter-down" : "adapter-up");
  auto xavier = [&rng](Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  };
  net.w1 = xavier(hidden, in);
  net.b1 = Vector::Zero(hidden);
  net.w2 = xavier(out, hidden);
  net.b2 = Vector::Zero(out);
  return net;
}

AdapterGrads AdapterGrads::zeros_like(const AdapterNet& net) {
  return {Matrix::Zero(net.w1.rows(), net.w1.cols()), Vector::Zero(net.b1.size()),
          Matrix::Zero(net.w2.rows(), net.w2.cols()), Vector::Zero(net.b2.size())};
}

AdapterGrads& AdapterGrads::operator+=(const AdapterGrads& other) {
  w1 += other.w1;
  b1 += other.b1;
  w2 += other.w2;
  b2 += other.b2;
  return *this;
}

AdapterGrads& AdapterGrads::operator*=(double s) {
  w1 *= s;
  b1 *= s;
  w2 *= s;
  b2 *= s;
  return *this;
}

Matrix adapter_forward(const AdapterNet& net, const Matrix& input, AdapterCache* cache) {
  if (static_cast<std::size_t>(input.cols()) != net.input_dim()) {
    throw DataError("adapter input has dimension " + std::to_string(input.cols()) + ", expected " +
                    std::to_string(net.input_dim()));
  }
  Matrix pre = input * net.w1.transpose();
  pre.rowwise() += net.b1.transpose();
  Matrix hidden = pre;
  if (net.activation == Activation::leaky_relu) {
    hidden = pre.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
  }
  Matrix out = hidden * net.w2.transpose();
  out.rowwise() += net.b2.transpose();
  if (cache) {
    cache->input = input;
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

Matrix adapter_backward(const AdapterNet& net, const AdapterCache& cache, const Matrix& grad_out,
                        AdapterGrads& grads) {
  grads.w2.noalias() += grad_out.transpose() * cache.hidden;
  grads.b2 += grad_out.colwise().sum().transpose();
  Matrix grad_hidden = grad_out * net.w2;
  if (net.activation == Activation::leaky_relu) {
    grad_hidden.array() *= cache.pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; }).array();
  }
  grads.w1.noalias() += grad_hidden.transpose() * cache.input;
  grads.b1 += grad_hidden.colwise().sum().transpose();
  return grad_hidden * net.w1;
}

}  // namespace semalign
