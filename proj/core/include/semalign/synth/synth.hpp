#pragma once

#include <cstddef>
#include <cstdint>

#include "semalign/align/semantic_store.hpp"
#include "semalign/common/linalg.hpp"
#include "semalign/corpus/interactions.hpp"

namespace semalign {

/// Planted latent-factor generator. Users and items carry latent vectors z;
/// interactions are Bernoulli(sigmoid(a z_u.z_v + b)) and semantic vectors are
/// a fixed linear image of z plus Gaussian noise.
struct SynthConfig {
  std::size_t num_users = 300;
  std::size_t num_items = 200;
  std::size_t latent_dim = 8;
  double density = 0.02;
  std::size_t semantic_dim = 32;
  double semantic_noise = 0.5;
  double signal = 1.0;  // the logit scale a
  std::uint64_t seed = 0;

  void validate() const;
};

struct PlantedLatents {
  Matrix users;       // I x d_z
  Matrix items;       // J x d_z
  Matrix projection;  // d_s x d_z, the map W
  double scale = 1.0;  // a
  double bias = 0.0;   // b, calibrated
};

struct SynthData {
  InteractionSet interactions;  // raw ids "u<k>" / "i<k>"; only entities with edges are indexed
  SemanticStore semantic;       // every generated entity
  PlantedLatents latents;
};

SynthData generate(const SynthConfig& cfg);

/// Another independent interaction draw from the same latents, e.g. a second
/// era over the same users and items.
InteractionSet sample_interactions(const PlantedLatents& latents, std::uint64_t seed);

/// I x J matrix of planted interaction probabilities.
Matrix planted_probabilities(const PlantedLatents& latents);

/// Bias b such that the mean planted probability equals `density`.
double calibrate_bias(const Matrix& user_latents, const Matrix& item_latents, double scale, double density);

struct GaussianPairs {
  Matrix first;   // n x d
  Matrix second;  // n x d
  double true_mi = 0.0;
};

/// n pairs whose coordinates are bivariate normal with correlation rho;
/// I = -(d/2) ln(1 - rho^2).
GaussianPairs oracle_mi_gaussian_pairs(std::size_t n, std::size_t d, double rho, std::uint64_t seed);

}  // namespace semalign
