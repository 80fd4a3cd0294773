#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "semalign/common/linalg.hpp"
#include "semalign/corpus/interactions.hpp"

namespace semalign {

struct SplitRatios {
  unsigned train = 3;
  unsigned validation = 1;
  unsigned test = 1;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// Per-user edge counts: floor the train and validation shares, give the
/// remainder to test, then backfill an empty validation share (and an empty
/// train share) with one edge taken from test.
SplitCounts split_counts(std::size_t n, const SplitRatios& ratios = {});

/// All three sets share the same id maps.
struct SplitSet {
  InteractionSet train;
  InteractionSet validation;
  InteractionSet test;
};

/// Random per-user partition, deterministic in `seed`.
SplitSet split_interactions(const InteractionSet& set, const SplitRatios& ratios, std::uint64_t seed);

/// Returns a copy of `split.train` with round(ratio * |train|) uniformly drawn
/// (user, item) pairs added that occur nowhere in the split. Added edges are
/// flagged `synthetic`.
InteractionSet inject_noise(const SplitSet& split, double ratio, std::uint64_t seed);

/// Writes train.tsv, validation.tsv, test.tsv and id_map.json into `dir`.
void write_split(const std::filesystem::path& dir, const SplitSet& split);
SplitSet read_split(const std::filesystem::path& dir);

/// D^{-1/2} A D^{-1/2} over the (I+J)-node bipartite train graph. Users occupy
/// rows [0, I), items rows [I, I+J).
struct NormalizedAdjacency {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  SparseMatrix matrix;

  std::size_t num_nodes() const { return num_users + num_items; }
};

NormalizedAdjacency build_normalized_adjacency(const InteractionSet& train);

}  // namespace semalign
