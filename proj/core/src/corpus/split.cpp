#include "semalign/corpus/split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/common/random.hpp"

namespace semalign {

SplitCounts split_counts(std::size_t n, const SplitRatios& ratios) {
  const std::size_t total = ratios.train + ratios.validation + ratios.test;
  if (total == 0) throw DataError("split ratios must not all be zero");
  SplitCounts c;
  c.train = n * ratios.train / total;
  c.validation = n * ratios.validation / total;
  c.test = n - c.train - c.validation;
  if (ratios.validation > 0 && c.validation == 0 && c.test >= 2) {
    --c.test;
    ++c.validation;
  }
  if (c.train == 0 && c.test >= 1) {
    --c.test;
    ++c.train;
  }
  return c;
}

SplitSet split_interactions(const InteractionSet& set, const SplitRatios& ratios, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_user(set.num_users());
  for (std::size_t i = 0; i < set.edges.size(); ++i) by_user[set.edges[i].user].push_back(i);

  SplitSet out{set.empty_like(), set.empty_like(), set.empty_like()};
  auto rng = make_rng(seed, "split");
  for (auto& idx : by_user) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto c = split_counts(idx.size(), ratios);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& e = set.edges[idx[k]];
      if (k < c.train) {
        out.train.edges.push_back(e);
      } else if (k < c.train + c.validation) {
        out.validation.edges.push_back(e);
      } else {
        out.test.edges.push_back(e);
      }
    }
  }
  return out;
}

InteractionSet inject_noise(const SplitSet& split, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DataError("noise ratio must lie in [0, 1]");
  InteractionSet out = split.train;
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(split.train.edges.size())));
  if (count == 0) return out;

  const std::uint64_t num_items = split.train.num_items();
  const std::uint64_t space = split.train.num_users() * num_items;
  std::unordered_set<std::uint64_t> present;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& e : part->edges) present.insert(e.user * num_items + e.item);
  }
  const std::uint64_t available = space - present.size();
  if (count > available) {
    throw DataError("cannot inject " + std::to_string(count) + " noise edges: only " + std::to_string(available) +
                    " absent pairs exist");
  }

  auto rng = make_rng(seed, "noise");
  std::vector<std::uint64_t> chosen;
  chosen.reserve(count);
  if (available <= 4 * count) {
    // Dense regime: enumerate the complement and take a random prefix.
    std::vector<std::uint64_t> absent;
    absent.reserve(available);
    for (std::uint64_t p = 0; p < space; ++p) {
      if (!present.contains(p)) absent.push_back(p);
    }
    for (std::size_t k = 0; k < count; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, absent.size() - 1);
      std::swap(absent[k], absent[pick(rng)]);
      chosen.push_back(absent[k]);
    }
  } else {
    std::uniform_int_distribution<std::uint64_t> pick(0, space - 1);
    while (chosen.size() < count) {
      const auto p = pick(rng);
      if (present.insert(p).second) chosen.push_back(p);
    }
  }
  for (auto p : chosen) {
    Interaction e;
    e.user = static_cast<std::uint32_t>(p / num_items);
    e.item = static_cast<std::uint32_t>(p % num_items);
    e.synthetic = true;
    out.edges.push_back(e);
  }
  return out;
}

namespace {

InteractionSet read_edges(const std::filesystem::path& path, const IdMap& users, const IdMap& items) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  InteractionSet out;
  out.users = users;
  out.items = items;
  const auto text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return out;

  std::istringstream is(text);
  InteractionSet parsed;
  try {
    parsed = parse_interactions(is, InteractionFormat::tsv);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  for (auto e : parsed.edges) {
    auto u = users.find(parsed.users.raw(e.user));
    auto v = items.find(parsed.items.raw(e.item));
    if (!u || !v) throw DataError(path.string() + ": edge references an id missing from id_map.json");
    e.user = *u;
    e.item = *v;
    out.edges.push_back(e);
  }
  return out;
}

}  // namespace

void write_split(const std::filesystem::path& dir, const SplitSet& split) {
  std::filesystem::create_directories(dir);
  write_interactions_tsv(dir / "train.tsv", split.train);
  write_interactions_tsv(dir / "validation.tsv", split.validation);
  write_interactions_tsv(dir / "test.tsv", split.test);
  nlohmann::json ids{{"users", split.train.users.raws()}, {"items", split.train.items.raws()}};
  std::ofstream out(dir / "id_map.json");
  if (!out) throw DataError("cannot write " + (dir / "id_map.json").string());
  out << ids.dump(1) << '\n';
}

SplitSet read_split(const std::filesystem::path& dir) {
  std::ifstream in(dir / "id_map.json");
  if (!in) throw DataError("missing id_map.json in " + dir.string());
  nlohmann::json ids;
  try {
    ids = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("id_map.json: " + std::string(e.what()));
  }
  if (!ids.contains("users") || !ids.contains("items")) throw DataError("id_map.json needs \"users\" and \"items\"");
  const IdMap users(ids["users"].get<std::vector<std::string>>());
  const IdMap items(ids["items"].get<std::vector<std::string>>());
  return SplitSet{read_edges(dir / "train.tsv", users, items), read_edges(dir / "validation.tsv", users, items),
                  read_edges(dir / "test.tsv", users, items)};
}

NormalizedAdjacency build_normalized_adjacency(const InteractionSet& train) {
  if (train.edges.empty()) throw DataError("cannot build an adjacency from an empty training set");
  const std::size_t users = train.num_users();
  const std::size_t n = users + train.num_items();
  std::vector<double> degree(n, 0.0);
  for (const auto& e : train.edges) {
    degree[e.user] += 1.0;
    degree[users + e.item] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * train.edges.size());
  for (const auto& e : train.edges) {
    const auto a = static_cast<Eigen::Index>(e.user);
    const auto b = static_cast<Eigen::Index>(users + e.item);
    const double w = 1.0 / std::sqrt(degree[a] * degree[b]);
    triplets.emplace_back(a, b, w);
    triplets.emplace_back(b, a, w);
  }
  NormalizedAdjacency adj;
  adj.num_users = users;
  adj.num_items = train.num_items();
  adj.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  adj.matrix.setFromTriplets(triplets.begin(), triplets.end());
  adj.matrix.makeCompressed();
  return adj;
}

}  // namespace semalign
