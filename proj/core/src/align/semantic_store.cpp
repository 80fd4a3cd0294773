#include "semalign/align/semantic_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>

#include "json.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/common/random.hpp"

namespace semalign {
namespace {

std::filesystem::path meta_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".meta.json");
  return p;
}

void append_float(std::string& out, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<float>(v));
  out.append(buf, p);
}

void append_line(std::string& out, const std::string& id, std::string_view kind, const Matrix& m, Eigen::Index row) {
  out += R"({"id":)";
  out += nlohmann::json(id).dump();
  out += R"(,"kind":")";
  out += kind;
  out += R"(","vec":[)";
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    if (c) out.push_back(',');
    append_float(out, m(row, c));
  }
  out += "]}\n";
}

}  // namespace

SemanticStore parse_semantic_jsonl(std::istream& in) {
  std::vector<std::vector<double>> uvecs, ivecs;
  SemanticStore store;
  std::optional<std::size_t> dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "semantic line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("kind") ||
        !j["kind"].is_string() || !j.contains("vec") || !j["vec"].is_array()) {
      throw DataError(where + R"(expected {"id": str, "kind": str, "vec": [...]})");
    }
    const auto id = j["id"].get<std::string>();
    const auto kind = j["kind"].get<std::string>();
    std::vector<double> vec;
    vec.reserve(j["vec"].size());
    for (const auto& x : j["vec"]) {
      if (!x.is_number()) throw DataError(where + "non-numeric vector entry");
      const auto f = static_cast<float>(x.get<double>());
      if (!std::isfinite(f)) throw DataError(where + "non-finite vector entry");
      vec.push_back(f);
    }
    if (vec.empty()) throw DataError(where + "empty vector");
    if (!dim) dim = vec.size();
    if (vec.size() != *dim) {
      throw DataError(where + "dimension " + std::to_string(vec.size()) + " differs from " + std::to_string(*dim));
    }
    IdMap* ids = nullptr;
    std::vector<std::vector<double>>* vecs = nullptr;
    if (kind == "user") {
      ids = &store.user_ids;
      vecs = &uvecs;
    } else if (kind == "item") {
      ids = &store.item_ids;
      vecs = &ivecs;
    } else {
      throw DataError(where + "kind must be \"user\" or \"item\"");
    }
    if (ids->find(id)) throw DataError(where + "duplicate " + kind + " id '" + id + "'");
    ids->intern(id);
    vecs->push_back(std::move(vec));
  }
  if (!dim) throw DataError("semantic file contains no vectors");
  auto to_matrix = [&](const std::vector<std::vector<double>>& rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(*dim));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < *dim; ++c) m(r, c) = rows[r][c];
    }
    return m;
  };
  store.users = to_matrix(uvecs);
  store.items = to_matrix(ivecs);
  return store;
}

SemanticStore read_semantic_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open semantic file " + path.string());
  SemanticStore store;
  try {
    store = parse_semantic_jsonl(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (std::ifstream meta(meta_path(path)); meta) {
    try {
      const auto j = nlohmann::json::parse(meta);
      store.provenance.model = j.value("model", "");
      store.provenance.generated_at = j.value("generated_at", "");
    } catch (const nlohmann::json::exception& e) {
      throw DataError(meta_path(path).string() + ": " + e.what());
    }
  }
  return store;
}

void write_semantic_jsonl(std::ostream& out, const SemanticStore& store) {
  std::string buf;
  for (Eigen::Index r = 0; r < store.users.rows(); ++r) {
    append_line(buf, store.user_ids.raw(static_cast<std::uint32_t>(r)), "user", store.users, r);
  }
  for (Eigen::Index r = 0; r < store.items.rows(); ++r) {
    append_line(buf, store.item_ids.raw(static_cast<std::uint32_t>(r)), "item", store.items, r);
  }
  out << buf;
}

void write_semantic_jsonl(const std::filesystem::path& path, const SemanticStore& store) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_semantic_jsonl(out, store);
  if (!store.provenance.model.empty() || !store.provenance.generated_at.empty()) {
    std::ofstream meta(meta_path(path));
    meta << nlohmann::json{{"model", store.provenance.model}, {"generated_at", store.provenance.generated_at}}.dump()
         << '\n';
  }
}

SemanticStore align_store(const SemanticStore& store, const IdMap& users, const IdMap& items) {
  SemanticStore out;
  out.user_ids = users;
  out.item_ids = items;
  out.provenance = store.provenance;
  const auto d = static_cast<Eigen::Index>(store.dim());
  out.users.resize(static_cast<Eigen::Index>(users.size()), d);
  out.items.resize(static_cast<Eigen::Index>(items.size()), d);
  for (std::uint32_t u = 0; u < users.size(); ++u) {
    auto src = store.user_ids.find(users.raw(u));
    if (!src) throw DataError("semantic store has no vector for user '" + users.raw(u) + "'");
    out.users.row(u) = store.users.row(*src);
  }
  for (std::uint32_t v = 0; v < items.size(); ++v) {
    auto src = store.item_ids.find(items.raw(v));
    if (!src) throw DataError("semantic store has no vector for item '" + items.raw(v) + "'");
    out.items.row(v) = store.items.row(*src);
  }
  return out;
}

SemanticStore shuffle_store(const SemanticStore& store, std::uint64_t seed) {
  auto rng = make_rng(seed, "shuffle-store");
  auto permute = [&rng](const Matrix& m) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(m.rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.row(r) = m.row(perm[r]);
    return out;
  };
  SemanticStore out = store;
  out.users = permute(store.users);
  out.items = permute(store.items);
  return out;
}

}  // namespace semalign
