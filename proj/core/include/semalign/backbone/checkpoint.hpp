#pragma once

#include <filesystem>

#include "semalign/backbone/backbone.hpp"
#include "semalign/corpus/interactions.hpp"

namespace semalign {

/// Binary layout, little-endian: "RLMC", u32 version, u32 d_e, u32 I, u32 J,
/// then (I + J + 1) x d_e f32 values in row-major order (mask row last).
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  EmbeddingTable table;
  IdMap users;
  IdMap items;
};

/// Id maps go to a JSON sidecar next to `path` (see `checkpoint_sidecar`).
void save_checkpoint(const std::filesystem::path& path, const EmbeddingTable& table, const IdMap& users,
                     const IdMap& items);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

}  // namespace semalign
