#pragma once

// Sampled joint futures for one scene and the prediction file format.

#include "jvae/scene.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace jvae {

using Trajectory = std::vector<Vec2>;

struct AgentPrediction {
  int agent_id = 0;
  std::vector<Trajectory> samples;            // N × pred_len positions
  std::vector<std::vector<double>> latents;   // N × latent_dim, empty when read from file
};

struct PredictionSet {
  Scene scene;  // the conditioning scene, ground truth included
  std::vector<AgentPrediction> agents;  // same order as scene.agents

  [[nodiscard]] std::size_t n_samples() const { return agents.empty() ? 0 : agents.front().samples.size(); }
  [[nodiscard]] const AgentPrediction& of(int agent_id) const;
};

std::string format_prediction_line(const PredictionSet& p);
PredictionSet parse_prediction_line(std::string_view line);

void write_predictions(std::ostream& out, const std::vector<PredictionSet>& preds);
std::vector<PredictionSet> read_predictions(std::istream& in);
void save_predictions(const std::filesystem::path& path, const std::vector<PredictionSet>& preds);
std::vector<PredictionSet> load_predictions(const std::filesystem::path& path);

}  // namespace jvae
