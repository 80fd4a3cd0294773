#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "semalign/common/linalg.hpp"
#include "semalign/corpus/interactions.hpp"

namespace semalign {

struct Provenance {
  std::string model;
  std::string generated_at;
};

/// Fixed-length profile embeddings s, one row per user and per item. Row i of
/// `users` belongs to `user_ids.raw(i)`; likewise for items.
struct SemanticStore {
  IdMap user_ids;
  IdMap item_ids;
  Matrix users;
  Matrix items;
  Provenance provenance;

  std::size_t dim() const { return static_cast<std::size_t>(users.rows() > 0 ? users.cols() : items.cols()); }
};

/// One JSON object per line: {"id": str, "kind": "user"|"item", "vec": [f32...]}.
/// Vectors are stored as f32; values are rounded to float on load.
SemanticStore parse_semantic_jsonl(std::istream& in);
SemanticStore read_semantic_jsonl(const std::filesystem::path& path);

/// Provenance, when set, goes to a `.meta.json` sidecar.
void write_semantic_jsonl(std::ostream& out, const SemanticStore& store);
void write_semantic_jsonl(const std::filesystem::path& path, const SemanticStore& store);

/// Reorders the store to the given id maps. Every mapped entity must be
/// present; entries for unknown ids are dropped.
SemanticStore align_store(const SemanticStore& store, const IdMap& users, const IdMap& items);

/// Permutes user vectors among users and item vectors among items.
SemanticStore shuffle_store(const SemanticStore& store, std::uint64_t seed);

}  // namespace semalign
