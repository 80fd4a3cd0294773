#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace semalign::testing {

InteractionSet make_set(std::size_t users, std::size_t items, const std::vector<Edge>& edges) {
  InteractionSet set;
  for (std::size_t u = 0; u < users; ++u) set.users.intern("u" + std::to_string(u));
  for (std::size_t v = 0; v < items; ++v) set.items.intern("i" + std::to_string(v));
  for (const auto& [u, v] : edges) set.edges.push_back(Interaction{u, v, std::nullopt, std::nullopt, false});
  return set;
}

InteractionSet random_set(std::size_t users, std::size_t items, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  std::set<Edge> edges;
  for (std::uint32_t u = 0; u < users; ++u) {
    for (std::uint32_t v = 0; v < items; ++v) {
      if (coin(rng)) edges.emplace(u, v);
    }
  }
  std::uniform_int_distribution<std::uint32_t> any_item(0, static_cast<std::uint32_t>(items - 1));
  std::uniform_int_distribution<std::uint32_t> any_user(0, static_cast<std::uint32_t>(users - 1));
  for (std::uint32_t u = 0; u < users; ++u) edges.emplace(u, any_item(rng));
  for (std::uint32_t v = 0; v < items; ++v) edges.emplace(any_user(rng), v);
  return make_set(users, items, {edges.begin(), edges.end()});
}

std::set<RawEdge> raw_edges(const InteractionSet& set) {
  std::set<RawEdge> out;
  for (const auto& e : set.edges) out.emplace(set.users.raw(e.user), set.items.raw(e.item));
  return out;
}

bool raw_edges_equal(const InteractionSet& a, const InteractionSet& b) { return raw_edges(a) == raw_edges(b); }

std::set<RawEdge> brute_kcore(std::set<RawEdge> edges, int k) {
  for (bool changed = true; changed;) {
    changed = false;
    std::map<std::string, int> user_deg;
    std::map<std::string, int> item_deg;
    for (const auto& [u, v] : edges) {
      ++user_deg[u];
      ++item_deg[v];
    }
    for (auto it = edges.begin(); it != edges.end();) {
      if (user_deg[it->first] < k || item_deg[it->second] < k) {
        it = edges.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }
  return edges;
}

Matrix dense_adjacency(const InteractionSet& train) {
  const auto nu = train.num_users();
  const auto n = nu + train.num_items();
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& e : train.edges) {
    a(e.user, static_cast<Eigen::Index>(nu + e.item)) = 1.0;
    a(static_cast<Eigen::Index>(nu + e.item), e.user) = 1.0;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) deg[i] += a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      if (a(ii, jj) != 0.0) out(ii, jj) = 1.0 / std::sqrt(deg[i] * deg[j]);
    }
  }
  return out;
}

Matrix dense_encode(const Matrix& x, const Matrix& adj, BackboneKind kind, int layers) {
  std::vector<Matrix> outputs;
  Matrix power = Matrix::Identity(adj.rows(), adj.cols());
  for (int l = 0; l <= layers; ++l) {
    outputs.push_back(power * x);
    power = power * adj;
  }
  if (kind == BackboneKind::lightgcn) {
    Matrix mean = Matrix::Zero(x.rows(), x.cols());
    for (const auto& o : outputs) mean += o;
    return mean / static_cast<double>(layers + 1);
  }
  Matrix cat(x.rows(), x.cols() * (layers + 1));
  for (int l = 0; l <= layers; ++l) cat.middleCols(l * x.cols(), x.cols()) = outputs[static_cast<std::size_t>(l)];
  return cat;
}

double cosine(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    dot += a(i, k) * b(j, k);
    na += a(i, k) * a(i, k);
    nb += b(j, k) * b(j, k);
  }
  return dot / std::sqrt(na * nb);
}

double brute_logit_ce(const Matrix& logits) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j));
    total += -std::log(std::exp(logits(i, i)) / z);
  }
  return total / static_cast<double>(logits.rows());
}

double brute_info_nce(const Matrix& anchors, const Matrix& candidates, double tau) {
  Matrix logits(anchors.rows(), candidates.rows());
  for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
    for (Eigen::Index j = 0; j < candidates.rows(); ++j) logits(i, j) = cosine(anchors, i, candidates, j) / tau;
  }
  return brute_logit_ce(logits);
}

double brute_bpr(const Matrix& e, const std::vector<Triple>& batch, double l2_weight, const Matrix& x,
                 std::size_t num_users) {
  const auto nu = static_cast<Eigen::Index>(num_users);
  double total = 0.0;
  for (const auto& t : batch) {
    double pos = 0.0;
    double neg = 0.0;
    for (Eigen::Index k = 0; k < e.cols(); ++k) {
      pos += e(t.user, k) * e(nu + t.pos, k);
      neg += e(t.user, k) * e(nu + t.neg, k);
    }
    total += -std::log(1.0 / (1.0 + std::exp(-(pos - neg))));
    double sq = 0.0;
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      sq += x(t.user, k) * x(t.user, k) + x(nu + t.pos, k) * x(nu + t.pos, k) + x(nu + t.neg, k) * x(nu + t.neg, k);
    }
    total += l2_weight * sq;
  }
  return total / static_cast<double>(batch.size());
}

Matrix brute_adapter_forward(const AdapterNet& net, const Matrix& input) {
  Matrix out(input.rows(), net.w2.rows());
  for (Eigen::Index r = 0; r < input.rows(); ++r) {
    std::vector<double> hidden(static_cast<std::size_t>(net.w1.rows()));
    for (Eigen::Index h = 0; h < net.w1.rows(); ++h) {
      double a = net.b1(h);
      for (Eigen::Index k = 0; k < net.w1.cols(); ++k) a += net.w1(h, k) * input(r, k);
      if (net.activation == Activation::leaky_relu && a < 0.0) a *= 0.01;
      hidden[static_cast<std::size_t>(h)] = a;
    }
    for (Eigen::Index o = 0; o < net.w2.rows(); ++o) {
      double a = net.b2(o);
      for (Eigen::Index h = 0; h < net.w2.cols(); ++h) a += net.w2(o, h) * hidden[static_cast<std::size_t>(h)];
      out(r, o) = a;
    }
  }
  return out;
}

Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& at, double h) {
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (Eigen::Index i = 0; i < at.rows(); ++i) {
    for (Eigen::Index j = 0; j < at.cols(); ++j) {
      probe(i, j) = at(i, j) + h;
      const double up = f(probe);
      probe(i, j) = at(i, j) - h;
      const double down = f(probe);
      probe(i, j) = at(i, j);
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

Vector finite_difference(const std::function<double(const Vector&)>& f, const Vector& at, double h) {
  Vector grad(at.size());
  Vector probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    probe(i) = at(i) + h;
    const double up = f(probe);
    probe(i) = at(i) - h;
    const double down = f(probe);
    probe(i) = at(i);
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  if (scale == 0.0) return 0.0;
  return (analytic - numeric).norm() / scale;
}

std::vector<std::uint32_t> naive_top_n(const Matrix& scores, Eigen::Index user, const std::vector<std::uint32_t>& masked,
                                       std::size_t n) {
  std::vector<std::uint32_t> items;
  for (std::uint32_t v = 0; v < scores.cols(); ++v) {
    if (std::find(masked.begin(), masked.end(), v) == masked.end()) items.push_back(v);
  }
  std::sort(items.begin(), items.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (scores(user, a) != scores(user, b)) return scores(user, a) > scores(user, b);
    return a < b;
  });
  if (items.size() > n) items.resize(n);
  return items;
}

double naive_recall(const std::vector<std::uint32_t>& ranked, const std::vector<std::uint32_t>& truth, int n) {
  int hits = 0;
  for (int k = 0; k < n && k < static_cast<int>(ranked.size()); ++k) {
    if (std::find(truth.begin(), truth.end(), ranked[static_cast<std::size_t>(k)]) != truth.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double naive_ndcg(const std::vector<std::uint32_t>& ranked, const std::vector<std::uint32_t>& truth, int n) {
  double dcg = 0.0;
  for (int k = 0; k < n && k < static_cast<int>(ranked.size()); ++k) {
    if (std::find(truth.begin(), truth.end(), ranked[static_cast<std::size_t>(k)]) != truth.end()) {
      dcg += 1.0 / std::log2(k + 2.0);
    }
  }
  double idcg = 0.0;
  for (int k = 0; k < n && k < static_cast<int>(truth.size()); ++k) idcg += 1.0 / std::log2(k + 2.0);
  return dcg / idcg;
}

std::vector<double> adam_scalar_trace(double start, const std::vector<double>& grads, double lr, double beta1,
                                      double beta2, double eps) {
  std::vector<double> trace;
  double p = start;
  double m = 0.0;
  double v = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
    const double v_hat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
    p -= lr * m_hat / (std::sqrt(v_hat) + eps);
    trace.push_back(p);
  }
  return trace;
}

}  // namespace semalign::testing
