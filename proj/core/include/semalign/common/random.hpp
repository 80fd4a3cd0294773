#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace semalign {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a stream tag, so
/// that consumers of randomness do not perturb one another.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

inline Rng make_rng(std::uint64_t seed, std::string_view tag) { return Rng(derive_seed(seed, tag)); }

}  // namespace semalign
