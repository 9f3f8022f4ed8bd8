#pragma once

// Test-time sampling: prior chain over agents in canonical order, then the
// decoder. Ground-truth futures are never read.

#include "jvae/model.hpp"
#include "jvae/prediction.hpp"
#include "jvae/scene.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace jvae::inference {

struct PredictOptions {
  // Draw every latent at the prior mean, so all samples coincide.
  bool zero_prior_variance = false;
  bool keep_latents = false;
};

// N joint samples for every agent, ego included. Sample k depends only on
// (seed, k), so a larger N extends a smaller run. The returned scene keeps
// the input's agent order and frame; N = 0 throws std::invalid_argument.
PredictionSet predict(const Scene& scene, const model::Model& model, std::size_t n_samples, std::uint64_t seed,
                      const PredictOptions& options = {});

std::vector<PredictionSet> predict_all(std::span<const Scene> scenes, const model::Model& model,
                                       std::size_t n_samples, std::uint64_t seed,
                                       const PredictOptions& options = {});

// Same as predict() but the agents are processed exactly in the given order
// and frame (ego must come first).
PredictionSet predict_in_order(const Scene& scene, const model::Model& model, std::size_t n_samples,
                               std::uint64_t seed, const PredictOptions& options = {});

// Energy distance between two 2-D point sets (V-statistic form, so equal
// sets give exactly zero).
double energy_distance(std::span<const Vec2> a, std::span<const Vec2> b);

struct OrderReport {
  double mean_shift = 0.0;           // over orderings and non-ego agents
  std::vector<double> per_ordering;  // mean over agents for each ordering
  std::size_t orderings = 0;
};

// Endpoint-distribution shift between the canonical ordering and
// `orderings` random permutations of the non-ego agents.
OrderReport order_sensitivity(const Scene& scene, const model::Model& model, std::size_t n_samples,
                              std::uint64_t seed, std::size_t orderings = 5);

}  // namespace jvae::inference
