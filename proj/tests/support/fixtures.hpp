#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "semalign/align/semantic_store.hpp"
#include "semalign/corpus/split.hpp"
#include "semalign/optim/trainer.hpp"
#include "semalign/synth/synth.hpp"

namespace semalign::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Default synthetic data for one seed: generator, split and semantic store
/// all use `seed`; the store is aligned to the split's id maps.
struct SyntheticRun {
  SynthData data;
  SplitSet split;
  SemanticStore semantic;
};
SyntheticRun synthetic_run(std::uint64_t seed, SynthConfig cfg = {});

/// Training settings for desk-scale experiments. The library defaults (lr
/// 1e-3, patience 5, validation every epoch) stop after a handful of Adam
/// steps here because the whole training set fits in one batch.
TrainConfig experiment_config(TrainMode mode, std::uint64_t seed);

std::string read_file(const std::filesystem::path& path);

/// Writes `interactions.tsv` and `items.jsonl` for `users` users and `items`
/// items. Every user has six interactions, so a 3:1:1 split keeps all of them
/// in train. Even items carry a description; odd items carry attributes and
/// reviews written by their users.
void write_text_corpus(const std::filesystem::path& dir, std::size_t users, std::size_t items);

}  // namespace semalign::testing
