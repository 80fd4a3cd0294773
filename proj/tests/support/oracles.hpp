#pragma once

// Naive re-implementations used as test oracles. They favour loops and
// textbook formulas over speed and share no code with the library beyond its
// plain data types.

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "semalign/align/adapter.hpp"
#include "semalign/backbone/backbone.hpp"
#include "semalign/corpus/interactions.hpp"

namespace semalign::testing {

using Edge = std::pair<std::uint32_t, std::uint32_t>;
using RawEdge = std::pair<std::string, std::string>;

/// Users "u<k>" and items "i<k>" are interned in index order.
InteractionSet make_set(std::size_t users, std::size_t items, const std::vector<Edge>& edges);

/// Bernoulli(p) bipartite graph; every user and item keeps at least one edge.
InteractionSet random_set(std::size_t users, std::size_t items, double p, std::uint64_t seed);

std::set<RawEdge> raw_edges(const InteractionSet& set);
bool raw_edges_equal(const InteractionSet& a, const InteractionSet& b);

/// Repeatedly deletes every edge touching a node of degree < k until nothing changes.
std::set<RawEdge> brute_kcore(std::set<RawEdge> edges, int k);

/// Dense D^{-1/2} A D^{-1/2}, users first.
Matrix dense_adjacency(const InteractionSet& train);

/// Layer outputs from explicit matrix powers.
Matrix dense_encode(const Matrix& x, const Matrix& adj, BackboneKind kind, int layers);

double cosine(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j);

/// -1/n sum_i ln( exp(l_ii) / sum_j exp(l_ij) ), evaluated literally.
double brute_logit_ce(const Matrix& logits);

/// InfoNCE with exp(cos/tau) scores, evaluated literally.
double brute_info_nce(const Matrix& anchors, const Matrix& candidates, double tau);

double brute_bpr(const Matrix& e, const std::vector<Triple>& batch, double l2_weight, const Matrix& x,
                 std::size_t num_users);

/// Per-row loops over W2 act(W1 v + b1) + b2.
Matrix brute_adapter_forward(const AdapterNet& net, const Matrix& input);

/// Central differences of `f` at every entry of `at`.
Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& at, double h = 1e-6);
Vector finite_difference(const std::function<double(const Vector&)>& f, const Vector& at, double h = 1e-6);

/// |a - n| / max(|a|, |n|) in the Frobenius norm; 0 when both vanish.
double relative_error(const Matrix& analytic, const Matrix& numeric);

/// Full sort of every item by (score desc, index asc), masked items removed,
/// truncated to n.
std::vector<std::uint32_t> naive_top_n(const Matrix& scores, Eigen::Index user, const std::vector<std::uint32_t>& masked,
                                       std::size_t n);
double naive_recall(const std::vector<std::uint32_t>& ranked, const std::vector<std::uint32_t>& truth, int n);
double naive_ndcg(const std::vector<std::uint32_t>& ranked, const std::vector<std::uint32_t>& truth, int n);

/// Scalar Adam recurrence written out step by step.
std::vector<double> adam_scalar_trace(double start, const std::vector<double>& grads, double lr, double beta1,
                                      double beta2, double eps);

}  // namespace semalign::testing
