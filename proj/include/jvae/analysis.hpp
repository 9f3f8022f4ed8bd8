#pragma once

// Interaction-density diagnostics over scene corpora: interaction tagging,
// closest-approach distribution, acceleration and error versus distance.

#include "jvae/scene.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace jvae::metrics {
struct AgentRecord;
}

namespace jvae::analysis {

// An agent interacts when its acceleration reaches a_min while it is within
// d_max of the ego.
struct InteractionThresholds {
  double a_min = 1.0;   // m/s²
  double d_max = 10.0;  // m
};

struct InteractionTag {
  std::string scene_id;
  int agent_id = 0;
  bool interacting = false;
  double closest_approach = 0.0;  // m
  double max_accel_near = 0.0;    // m/s², 0 when never within d_max
};

// Per-step distance of an agent to the ego over the whole trajectory.
std::vector<double> distance_to_ego(const Scene& scene, const Agent& agent);
double closest_approach(const Scene& scene, const Agent& agent);

InteractionTag tag_agent(const Scene& scene, const Agent& agent, const InteractionThresholds& th = {});
// Tags for every non-ego agent, sorted by agent id.
std::vector<InteractionTag> tag_interactions(const Scene& scene, const InteractionThresholds& th = {});
std::vector<InteractionTag> tag_interactions(std::span<const Scene> scenes,
                                             const InteractionThresholds& th = {});

struct CdfPoint {
  double distance = 0.0;
  double fraction = 0.0;
};

// Empirical CDF of closest approach over non-ego agents; one point per
// distinct distance, fraction = share of agents at or below it.
std::vector<CdfPoint> closest_approach_cdf(std::span<const Scene> scenes);
double cdf_at(const std::vector<CdfPoint>& cdf, double distance);

struct Bin {
  double low = 0.0;
  double high = 0.0;
  std::optional<double> value;  // absent when nothing fell in the bin
  std::size_t count = 0;
};

using Curve = std::vector<Bin>;

// 0–50 m in 2.5 m steps.
std::vector<double> default_bin_edges();

// Mean over agents of the maximum |a| reached while inside each distance bin.
Curve accel_vs_distance(std::span<const Scene> scenes, const std::vector<double>& edges);

// Mean Best-of-N FDE of the records falling in each closest-approach bin.
Curve error_vs_proximity(std::span<const metrics::AgentRecord> records, const std::vector<double>& edges,
                         std::size_t horizon_index);

// Index of the occupied bin with the largest value.
std::optional<std::size_t> peak_bin(const Curve& curve);

void write_curve_csv(std::ostream& out, const Curve& curve);
void write_cdf_csv(std::ostream& out, const std::vector<CdfPoint>& cdf);

}  // namespace jvae::analysis
