#pragma once

// Social-forces generator of interacting ego/pedestrian/bicyclist scenes.
//
// Dense mode places pedestrians on collision courses with the ego and lets a
// hidden per-agent decision (hurry across, yield, or ignore) shape the
// future; sparse mode keeps every agent at least 20 m away from the ego path.

#include "jvae/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace jvae::synth {

enum class InteractionMode { dense, sparse };

std::string_view to_string(InteractionMode m);
InteractionMode parse_interaction_mode(std::string_view text);

enum class Decision { cross_before, yield_to_vehicle, continue_ };

std::string_view to_string(Decision d);

struct Dynamics {
  double k_goal = 2.0;          // 1/s
  double k_repulse = 4.0;       // m/s²
  double ttc_threshold = 3.0;   // s
  double a_max = 4.0;           // m/s²
  double hurry_factor = 1.5;
  double collision_radius = 3.0;  // m, closest approach counted as a conflict
};

struct GenConfig {
  std::uint64_t seed = 1;
  int n_scenes = 100;
  int agents_min = 2;  // non-ego agents per scene
  int agents_max = 4;
  InteractionMode interaction_mode = InteractionMode::dense;
  double yield_prob = 0.3;       // ego yields to conflicting agents
  double continue_prob = 0.1;    // pedestrian ignores the ego
  double decision_noise = 0.5;   // m, goal perturbation std
  double ego_speed = 6.0;        // m/s
  double ped_speed = 1.4;        // m/s
  double bicyclist_prob = 0.2;
  double bicyclist_speed_factor = 3.0;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  double dt = 0.5;
  int obs_len = 2;
  int pred_len = 6;
  Dynamics dynamics;
};

// Throws std::invalid_argument for an unusable configuration.
void validate(const GenConfig& config);

struct DecisionRecord {
  std::string scene_id;
  int agent_id = 0;
  Decision label = Decision::continue_;
};

struct Generated {
  SplitDataset data;
  std::vector<DecisionRecord> decisions;
};

struct AgentState {
  Vec2 position;
  Vec2 velocity;
  Vec2 goal;
  double speed = 0.0;  // preferred speed
  bool ego = false;
};

// One Euler step for every agent. decisions[k] applies to non-ego agents;
// ego_yields selects the ego's reaction.
std::vector<AgentState> step_dynamics(const std::vector<AgentState>& state,
                                      const std::vector<Decision>& decisions, bool ego_yields,
                                      const GenConfig& config);

// Time to the closest approach between two agents moving at constant
// velocity, or +inf when they do not come within the collision radius.
double time_to_collision(const AgentState& a, const AgentState& b, double collision_radius);

Generated generate(const GenConfig& config);

// Scene `index` of a corpus; `decision_draw` > 0 keeps the initial layout
// (and therefore the observed past) but redraws every hidden decision.
Generated generate_scene(const GenConfig& config, int index, int decision_draw = 0);

void write_decisions(std::ostream& out, const std::vector<DecisionRecord>& decisions);
void save_decisions(const std::filesystem::path& path, const std::vector<DecisionRecord>& decisions);

}  // namespace jvae::synth
