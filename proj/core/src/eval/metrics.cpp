#include "semalign/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "json.hpp"
#include "semalign/align/losses.hpp"
#include "semalign/backbone/backbone.hpp"
#include "semalign/common/errors.hpp"

namespace semalign {

RankingResult rank_all(const Matrix& scores, const ItemLists& masked, const ItemLists& truth,
                       std::span<const int> cutoffs) {
  RankingResult out;
  out.cutoffs.assign(cutoffs.begin(), cutoffs.end());
  std::sort(out.cutoffs.begin(), out.cutoffs.end());
  out.cutoffs.erase(std::unique(out.cutoffs.begin(), out.cutoffs.end()), out.cutoffs.end());
  if (out.cutoffs.empty() || out.cutoffs.front() < 1) throw DataError("cutoffs must be positive");
  const auto max_n = static_cast<std::size_t>(out.cutoffs.back());
  const auto num_users = static_cast<std::size_t>(scores.rows());
  const auto num_items = static_cast<std::size_t>(scores.cols());
  if (truth.size() > num_users || masked.size() > num_users) throw DataError("rank_all: more users than score rows");

  std::vector<char> blocked(num_items, 0);
  std::vector<std::uint32_t> candidates;
  candidates.reserve(num_items);
  for (std::uint32_t u = 0; u < truth.size(); ++u) {
    if (truth[u].empty()) continue;
    if (u < masked.size()) {
      for (auto v : masked[u]) blocked[v] = 1;
    }
    candidates.clear();
    for (std::uint32_t v = 0; v < num_items; ++v) {
      if (!blocked[v]) candidates.push_back(v);
    }
    if (u < masked.size()) {
      for (auto v : masked[u]) blocked[v] = 0;
    }
    const auto row = scores.row(u);
    auto better = [&row](std::uint32_t a, std::uint32_t b) {
      return row(a) > row(b) || (row(a) == row(b) && a < b);
    };
    const auto keep = std::min(max_n, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);
    candidates.resize(keep);
    out.users.push_back(u);
    out.ranked.push_back(candidates);
    auto t = truth[u];
    std::sort(t.begin(), t.end());
    out.truth.push_back(std::move(t));
  }
  return out;
}

RankingResult rank_all_embeddings(const Matrix& e, std::size_t num_users, const ItemLists& masked,
                                  const ItemLists& truth, std::span<const int> cutoffs) {
  return rank_all(score_all(e, num_users), masked, truth, cutoffs);
}

namespace {

void require_cutoff(const RankingResult& r, int n) {
  if (!std::binary_search(r.cutoffs.begin(), r.cutoffs.end(), n)) {
    throw DataError("cutoff " + std::to_string(n) + " was not ranked");
  }
}

}  // namespace

double recall_at_n(const RankingResult& result, int n) {
  require_cutoff(result, n);
  if (result.users.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < result.users.size(); ++k) {
    const auto& truth = result.truth[k];
    const auto& ranked = result.ranked[k];
    const auto top = std::min<std::size_t>(static_cast<std::size_t>(n), ranked.size());
    std::size_t hits = 0;
    for (std::size_t r = 0; r < top; ++r) hits += std::binary_search(truth.begin(), truth.end(), ranked[r]);
    sum += static_cast<double>(hits) / static_cast<double>(truth.size());
  }
  return sum / static_cast<double>(result.users.size());
}

double ndcg_at_n(const RankingResult& result, int n) {
  require_cutoff(result, n);
  if (result.users.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < result.users.size(); ++k) {
    const auto& truth = result.truth[k];
    const auto& ranked = result.ranked[k];
    const auto top = std::min<std::size_t>(static_cast<std::size_t>(n), ranked.size());
    double dcg = 0.0;
    for (std::size_t r = 0; r < top; ++r) {
      if (std::binary_search(truth.begin(), truth.end(), ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    const auto ideal_hits = std::min<std::size_t>(truth.size(), static_cast<std::size_t>(n));
    double idcg = 0.0;
    for (std::size_t r = 0; r < ideal_hits; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    sum += dcg / idcg;
  }
  return sum / static_cast<double>(result.users.size());
}

MetricsReport compute_metrics(const RankingResult& result) {
  MetricsReport m;
  m.users_evaluated = result.users.size();
  for (int n : result.cutoffs) {
    m.recall[n] = recall_at_n(result, n);
    m.ndcg[n] = ndcg_at_n(result, n);
  }
  return m;
}

MetricsReport evaluate_split(const Matrix& scores, const SplitSet& split, EvalStage stage,
                             std::span<const int> cutoffs) {
  ItemLists masked(split.train.num_users());
  for (const auto& e : split.train.edges) masked[e.user].push_back(e.item);
  const auto& target = stage == EvalStage::validation ? split.validation : split.test;
  if (stage == EvalStage::test) {
    for (const auto& e : split.validation.edges) masked[e.user].push_back(e.item);
  }
  ItemLists truth(split.train.num_users());
  for (const auto& e : target.edges) {
    if (!e.synthetic) truth[e.user].push_back(e.item);
  }
  return compute_metrics(rank_all(scores, masked, truth, cutoffs));
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::json recall = nlohmann::json::object();
  nlohmann::json ndcg = nlohmann::json::object();
  for (const auto& [n, v] : report.recall) recall[std::to_string(n)] = v;
  for (const auto& [n, v] : report.ndcg) ndcg[std::to_string(n)] = v;
  nlohmann::json j{{"recall", recall}, {"ndcg", ndcg}, {"users_evaluated", report.users_evaluated}};
  return j.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
  MetricsReport m;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [k, v] : j.at("recall").items()) m.recall[std::stoi(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("ndcg").items()) m.ndcg[std::stoi(k)] = v.get<double>();
    m.users_evaluated = j.at("users_evaluated").get<std::size_t>();
  } catch (const std::exception& e) {
    throw DataError(std::string("invalid metrics JSON: ") + e.what());
  }
  return m;
}

void print_metrics_table(std::ostream& out, const MetricsReport& report) {
  const auto flags = out.flags();
  out << std::left << std::setw(8) << "N" << std::setw(12) << "Recall" << "NDCG\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& [n, r] : report.recall) {
    const auto it = report.ndcg.find(n);
    out << std::setw(8) << n << std::setw(12) << r << (it != report.ndcg.end() ? it->second : 0.0) << '\n';
  }
  out << "users evaluated: " << report.users_evaluated << '\n';
  out.flags(flags);
}

Matrix semantic_only_scores(const SemanticStore& store) {
  auto unit = [](const Matrix& m) {
    Matrix u = m;
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      const double n = u.row(r).norm();
      if (n == 0.0) {
        u.row(r).setZero();
      } else {
        u.row(r) /= std::max(n, kCosineEps);
      }
    }
    return u;
  };
  return unit(store.users) * unit(store.items).transpose();
}

}  // namespace semalign
