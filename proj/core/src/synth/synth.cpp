#include "semalign/synth/synth.hpp"

#include <cmath>
#include <string>

#include "semalign/common/errors.hpp"
#include "semalign/common/random.hpp"

namespace semalign {

void SynthConfig::validate() const {
  if (num_users == 0 || num_items == 0 || latent_dim == 0 || semantic_dim == 0) {
    throw DataError("synthetic counts and dimensions must be positive");
  }
  if (!(semantic_noise >= 0.0)) throw DataError("semantic noise must be non-negative");
  if (!(density > 0.0 && density < 1.0)) throw DataError("density target must lie in (0, 1)");
}

namespace {

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

double mean_probability(const Matrix& logits_without_bias, double bias) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits_without_bias.size(); ++i) {
    sum += 1.0 / (1.0 + std::exp(-(logits_without_bias.data()[i] + bias)));
  }
  return sum / static_cast<double>(logits_without_bias.size());
}

Matrix semantic_rows(const Matrix& latents, const Matrix& projection, double noise, Rng& rng) {
  Matrix s = latents * projection.transpose();
  if (noise > 0.0) s += standard_normal(s.rows(), s.cols(), rng, noise);
  // The semantic file format is f32.
  return s.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

}  // namespace

double calibrate_bias(const Matrix& user_latents, const Matrix& item_latents, double scale, double density) {
  if (!(density > 0.0 && density < 1.0)) throw DataError("density target must lie in (0, 1)");
  const Matrix base = scale * (user_latents * item_latents.transpose());
  double lo = -60.0;
  double hi = 60.0;
  if (mean_probability(base, lo) > density || mean_probability(base, hi) < density) {
    throw DataError("density calibration failed: target " + std::to_string(density) + " is outside the bracket");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double p = mean_probability(base, mid);
    if (std::abs(p - density) < 1e-12) return mid;
    (p < density ? lo : hi) = mid;
  }
  const double b = 0.5 * (lo + hi);
  if (std::abs(mean_probability(base, b) - density) > 1e-9) {
    throw DataError("density calibration did not converge");
  }
  return b;
}

Matrix planted_probabilities(const PlantedLatents& latents) {
  const Matrix logits = latents.scale * (latents.users * latents.items.transpose());
  return logits.unaryExpr([b = latents.bias](double v) { return 1.0 / (1.0 + std::exp(-(v + b))); });
}

InteractionSet sample_interactions(const PlantedLatents& latents, std::uint64_t seed) {
  const Matrix prob = planted_probabilities(latents);
  auto rng = make_rng(seed, "synth-interactions");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  InteractionSet out;
  for (Eigen::Index u = 0; u < prob.rows(); ++u) {
    for (Eigen::Index v = 0; v < prob.cols(); ++v) {
      if (unit(rng) < prob(u, v)) {
        Interaction e;
        e.user = out.users.intern("u" + std::to_string(u));
        e.item = out.items.intern("i" + std::to_string(v));
        out.edges.push_back(e);
      }
    }
  }
  if (out.edges.empty()) throw DataError("synthetic draw produced no interactions");
  return out;
}

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, "synth-latents");
  SynthData data;
  auto& z = data.latents;
  const auto dz = static_cast<Eigen::Index>(cfg.latent_dim);
  z.users = standard_normal(static_cast<Eigen::Index>(cfg.num_users), dz, rng);
  z.items = standard_normal(static_cast<Eigen::Index>(cfg.num_items), dz, rng);
  // Unit-variance semantic coordinates before noise.
  z.projection = standard_normal(static_cast<Eigen::Index>(cfg.semantic_dim), dz, rng,
                                 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim)));
  z.scale = cfg.signal;
  z.bias = calibrate_bias(z.users, z.items, z.scale, cfg.density);

  data.interactions = sample_interactions(z, cfg.seed);

  auto noise_rng = make_rng(cfg.seed, "synth-semantic-noise");
  auto& sem = data.semantic;
  for (std::size_t u = 0; u < cfg.num_users; ++u) sem.user_ids.intern("u" + std::to_string(u));
  for (std::size_t v = 0; v < cfg.num_items; ++v) sem.item_ids.intern("i" + std::to_string(v));
  sem.users = semantic_rows(z.users, z.projection, cfg.semantic_noise, noise_rng);
  sem.items = semantic_rows(z.items, z.projection, cfg.semantic_noise, noise_rng);
  sem.provenance.model = "synthetic-linear";
  return data;
}

GaussianPairs oracle_mi_gaussian_pairs(std::size_t n, std::size_t d, double rho, std::uint64_t seed) {
  if (!(std::abs(rho) < 1.0)) throw DataError("correlation must satisfy |rho| < 1");
  auto rng = make_rng(seed, "gaussian-pairs");
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(d);
  GaussianPairs out;
  out.first = standard_normal(rows, cols, rng);
  const Matrix noise = standard_normal(rows, cols, rng);
  out.second = rho * out.first + std::sqrt(1.0 - rho * rho) * noise;
  out.true_mi = -0.5 * static_cast<double>(d) * std::log(1.0 - rho * rho);
  return out;
}

}  // namespace semalign
