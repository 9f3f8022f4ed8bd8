#pragma once

// β-weighted ELBO, alternating posterior/prior optimisation with Adam, and
// an importance-weighted bound for checking the ELBO.

#include "jvae/model.hpp"
#include "jvae/scene.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jvae::train {

struct TrainConfig {
  double beta = 0.10;
  double lr = 3e-3;
  double lr_decay = 0.9999;  // per step
  int steps = 2000;
  int batch_scenes = 8;
  std::uint64_t seed = 0;
  model::Variant variant = model::Variant::joint_beta_cvae;
  // Layer sizes and ego conditioning; variant and init seed are taken from
  // the fields above.
  model::Hyper hyper;
  double clip_norm = 10.0;
  double divergence_loss = 1e6;
  // Validation Best-of-N FDE every eval_every steps (0: only at the end).
  int eval_every = 0;
  int eval_samples = 20;
  double eval_horizon_s = 3.0;
  // Cap on validation scenes per evaluation (0: all).
  int eval_scenes = 0;
};

// Throws std::invalid_argument for out-of-range settings.
void validate(const TrainConfig& config);

// Numerical failure during training, with enough context to reproduce it.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int step, std::string scene_id, std::string term)
      : std::runtime_error(what), step(step), scene_id(std::move(scene_id)), term(std::move(term)) {}
  int step;
  std::string scene_id;
  std::string term;
  // Parameters from before the failing step.
  std::optional<model::Model> last_good;
};

struct ElboTerms {
  double loss = 0.0;   // recon + β·kl, the negative ELBO
  double recon = 0.0;  // Σ_i −log p(y_i | Z_{<=i}, X)
  double kl = 0.0;     // Σ_i KL(q_i ‖ p_i)
  std::vector<double> recon_per_agent;
  std::vector<double> kl_per_agent;
};

struct ElboGraph {
  diff::Var loss;
  ElboTerms terms;
};

// Records the loss of one scene on the network's tape with one posterior
// sample per agent. The scene must be in canonical order. Non-finite terms
// raise NumericalError (step -1).
ElboGraph build_elbo(model::Network& net, const Scene& scene, model::NoiseSource& noise, double beta);

// Value-only convenience wrapper around build_elbo.
ElboTerms elbo(const model::Model& model, const Scene& scene, model::NoiseSource& noise, double beta);

// Canonical order in the ego frame, the form every training routine expects.
Scene prepare(const Scene& scene);

struct IwBound {
  double bound = 0.0;            // log (1/K) Σ_k w_k
  double mean_log_weight = 0.0;  // (1/K) Σ_k log w_k over the same draws
  std::vector<double> log_weights;
};

// K-sample importance-weighted bound on log p(Y | X) using the joint
// posterior chain as proposal. Scene must be in canonical order.
IwBound importance_weighted_bound(const model::Model& model, const Scene& scene, std::size_t k,
                                  std::uint64_t seed);

enum class Phase { a, b };

struct StepRecord {
  int step = 0;
  Phase phase = Phase::a;
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double lr = 0.0;
};

struct EvalRecord {
  int step = 0;
  double val_fde = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
};

void write_log_csv(std::ostream& out, const TrainLog& log);
void write_eval_csv(std::ostream& out, const TrainLog& log);

struct TrainResult {
  model::Model model;  // best on validation when evaluated, else final
  TrainLog log;
  int best_step = -1;
};

// Even steps update encoders, posterior, decoder and σ² with the prior
// frozen; odd steps update the prior alone.
TrainResult train(const SplitDataset& data, const TrainConfig& config);

// Mean Best-of-N FDE at one horizon over the given scenes.
double mean_fde(std::span<const Scene> scenes, const model::Model& model, std::size_t n_samples,
                double horizon_s, std::uint64_t seed);

}  // namespace jvae::train
