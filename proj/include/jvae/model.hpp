#pragma once

// Joint-β-cVAE network and its cVAE / β-cVAE ablations.
//
// Agents are processed in canonical order. Agent i's posterior and prior
// latents condition on the latents already drawn for agents j < i through
// an attention head whose keys carry the other agents' codes, latents and
// relative location. The decoder conditions on Z_{<=i} and the past only.
// The independent variants replace every attention context with a learned
// null vector.

#include "jvae/diff.hpp"
#include "jvae/scene.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace jvae::model {

enum class Variant { cvae, beta_cvae, joint_beta_cvae };

std::string_view to_string(Variant v);
// Throws std::invalid_argument for an unknown name.
Variant parse_variant(std::string_view text);

struct Hyper {
  Variant variant = Variant::joint_beta_cvae;
  std::size_t hidden = 128;
  std::size_t latent = 32;
  std::size_t attn_hidden = 64;
  std::size_t value_dim = 64;
  // When false the ego never enters another agent's attention context.
  bool ego_conditioning = true;
  std::uint64_t init_seed = 0;

  bool operator==(const Hyper&) const = default;
};

void validate(const Hyper& hyper);

// φ: encoders and posterior; θ: prior, decoder and observation noise.
enum class Group { posterior, prior, decoder };

std::string_view to_string(Group g);

struct Param {
  std::string name;
  Group group = Group::posterior;
  diff::Array value;

  bool operator==(const Param&) const = default;
};

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 4.0;
inline const double kLogSigma2Min = std::log(1e-3);
inline constexpr double kLogSigma2Max = 0.0;

inline constexpr std::size_t kStepFeatures = 7;    // position, velocity, kind one-hot
inline constexpr std::size_t kFutureFeatures = 4;  // position, displacement

struct ModelParams {
  std::vector<Param> params;

  [[nodiscard]] bool contains(std::string_view name) const;
  [[nodiscard]] std::size_t index_of(std::string_view name) const;
  [[nodiscard]] const diff::Array& at(std::string_view name) const { return params[index_of(name)].value; }
  [[nodiscard]] diff::Array& at(std::string_view name) { return params[index_of(name)].value; }
  [[nodiscard]] std::size_t scalar_count() const;
  [[nodiscard]] bool all_finite() const;

  bool operator==(const ModelParams&) const = default;
};

struct Model {
  Hyper hyper;
  ModelParams params;

  [[nodiscard]] bool has_attention() const { return hyper.variant == Variant::joint_beta_cvae; }
  // cVAE keeps σ² fixed at 1.
  [[nodiscard]] bool learns_noise() const { return hyper.variant != Variant::cvae; }
  // β used by the variant; cVAE is pinned to the standard ELBO.
  [[nodiscard]] double effective_beta(double configured) const {
    return hyper.variant == Variant::cvae ? 1.0 : configured;
  }
};

Model build_variant(Variant kind, Hyper hyper);

// Clamp the observation-noise parameter into its allowed range.
void clamp_parameters(Model& model);

void save_checkpoint(std::ostream& out, const Model& model);
void save_checkpoint(const std::filesystem::path& path, const Model& model);
// Rejects unknown names, missing parameters and shape mismatches.
Model load_checkpoint(std::istream& in);
Model load_checkpoint(const std::filesystem::path& path);

class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : rng_(seed) {}
  static NoiseSource zeros() {
    NoiseSource n(0);
    n.zero_ = true;
    return n;
  }
  diff::Array draw(std::size_t dim);

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  bool zero_ = false;
};

struct AgentEmbedding {
  diff::Var past_code;                   // [1, H]
  std::optional<diff::Var> future_code;  // [1, H], training only
  Vec2 location;                         // last observed position
  bool ego = false;
};

struct GaussianLatent {
  diff::Var mean;     // [L]
  diff::Var log_var;  // [L]
  // Attention weights over the agents in `context`; empty for null context.
  std::vector<double> attention;
  std::vector<std::size_t> context;
};

struct Decoded {
  std::vector<diff::Var> positions;  // pred_len entries of [n, 2]
  diff::Var log_sigma2;              // [2]
};

struct NetworkOptions {
  // Use the null context everywhere, reducing the joint wiring to β-cVAE.
  bool force_null_context = false;
  // Groups whose parameters receive gradients; the rest are frozen.
  bool train_posterior = true;
  bool train_prior = true;
  bool train_decoder = true;
};

// Binds a Model to a tape. Every method records its computation so losses
// built from the results can be differentiated with respect to parameters.
class Network {
 public:
  Network(const Model& model, diff::Tape& tape, NetworkOptions options = {});

  [[nodiscard]] const Model& model() const { return model_; }
  [[nodiscard]] diff::Tape& tape() const { return tape_; }

  // Tape variable for a named parameter, created on first use.
  diff::Var param(std::string_view name);
  // Parameters touched so far, with their tape ids.
  [[nodiscard]] const std::vector<std::pair<std::size_t, diff::Var>>& bound() const { return bound_; }

  // Scene must already be in canonical order.
  std::vector<AgentEmbedding> encode_past(const Scene& scene);
  void encode_future(const Scene& scene, std::vector<AgentEmbedding>& embeddings);

  // Agents j < i that agent i may attend to.
  [[nodiscard]] std::vector<std::size_t> context_of(std::size_t i, std::span<const AgentEmbedding> emb) const;

  // q(z_i | Z_{<i}, X, Y); requires future codes.
  GaussianLatent posterior_step(std::size_t i, std::span<const diff::Var> z_prev,
                                std::span<const AgentEmbedding> emb);
  // p(z_i | Z_{<i}, X)
  GaussianLatent prior_step(std::size_t i, std::span<const diff::Var> z_prev, std::span<const AgentEmbedding> emb);

  // z = mean + exp(log_var / 2) ⊙ noise
  diff::Var sample_latent(const GaussianLatent& g, const diff::Array& noise);

  // Decoder for every agent given all latents (z[k] is [L]); rows follow
  // scene order, and row i depends only on z_0..z_i and the past.
  Decoded decode(const Scene& scene, std::span<const diff::Var> z, std::span<const AgentEmbedding> emb);

 private:
  enum class Side { posterior, prior, decoder };
  diff::Var attend(Side side, std::size_t i, std::span<const diff::Var> z_prev, std::span<const AgentEmbedding> emb,
                   std::vector<double>* weights, std::vector<std::size_t>* context);
  GaussianLatent head(Side side, diff::Var features, diff::Var ctx);

  const Model& model_;
  diff::Tape& tape_;
  NetworkOptions options_;
  std::vector<std::optional<diff::Var>> vars_;
  std::vector<std::pair<std::size_t, diff::Var>> bound_;
};

// Closed-form KL divergence between diagonal Gaussians, summed over dims.
diff::Var kl_divergence(const GaussianLatent& q, const GaussianLatent& p);
double kl_divergence(std::span<const double> q_mean, std::span<const double> q_log_var,
                     std::span<const double> p_mean, std::span<const double> p_log_var);

// log N(z; mean, diag exp(log_var)).
double gaussian_log_density(std::span<const double> mean, std::span<const double> log_var,
                            std::span<const double> z);

struct Reconstruction {
  diff::Var total;                  // Σ_agents −log p(y_i | Z_{<=i}, X)
  std::vector<double> per_agent;
};

// Negative log-likelihood of the ground-truth futures under the decoder's
// per-coordinate Gaussian.
Reconstruction reconstruction_nll(const Scene& scene, const Decoded& decoded);

// Per-step input features, exposed for tests.
diff::Array past_features(const Scene& scene, std::size_t step);
diff::Array future_features(const Scene& scene, std::size_t step);

}  // namespace jvae::model
