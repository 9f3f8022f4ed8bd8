#include "jvae/analysis.hpp"

#include "jvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace jvae::analysis {

std::vector<double> distance_to_ego(const Scene& scene, const Agent& agent) {
  const Agent& ego = scene.ego();
  const std::size_t n = std::min(agent.positions.size(), ego.positions.size());
  std::vector<double> d(n);
  for (std::size_t t = 0; t < n; ++t) d[t] = (agent.positions[t] - ego.positions[t]).norm();
  return d;
}

double closest_approach(const Scene& scene, const Agent& agent) {
  const auto d = distance_to_ego(scene, agent);
  return *std::min_element(d.begin(), d.end());
}

InteractionTag tag_agent(const Scene& scene, const Agent& agent, const InteractionThresholds& th) {
  InteractionTag tag;
  tag.scene_id = scene.scene_id;
  tag.agent_id = agent.id;
  const auto dist = distance_to_ego(scene, agent);
  const auto kin = kinematics(agent, scene.dt);
  tag.closest_approach = *std::min_element(dist.begin(), dist.end());
  for (std::size_t t = 0; t < dist.size(); ++t) {
    if (dist[t] <= th.d_max) tag.max_accel_near = std::max(tag.max_accel_near, kin.acceleration[t].norm());
  }
  tag.interacting = tag.max_accel_near >= th.a_min;
  return tag;
}

std::vector<InteractionTag> tag_interactions(const Scene& scene, const InteractionThresholds& th) {
  std::vector<InteractionTag> tags;
  for (const Agent& a : scene.agents) {
    if (!a.is_ego()) tags.push_back(tag_agent(scene, a, th));
  }
  std::sort(tags.begin(), tags.end(), [](const auto& a, const auto& b) { return a.agent_id < b.agent_id; });
  return tags;
}

std::vector<InteractionTag> tag_interactions(std::span<const Scene> scenes, const InteractionThresholds& th) {
  std::vector<InteractionTag> tags;
  for (const Scene& s : scenes) {
    auto t = tag_interactions(s, th);
    tags.insert(tags.end(), t.begin(), t.end());
  }
  return tags;
}

std::vector<CdfPoint> closest_approach_cdf(std::span<const Scene> scenes) {
  std::vector<double> d;
  for (const Scene& s : scenes) {
    for (const Agent& a : s.agents) {
      if (!a.is_ego()) d.push_back(closest_approach(s, a));
    }
  }
  std::sort(d.begin(), d.end());
  std::vector<CdfPoint> cdf;
  const double n = double(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i + 1 < d.size() && d[i + 1] == d[i]) continue;
    cdf.push_back({d[i], double(i + 1) / n});
  }
  return cdf;
}

double cdf_at(const std::vector<CdfPoint>& cdf, double distance) {
  double f = 0.0;
  for (const auto& p : cdf) {
    if (p.distance > distance) break;
    f = p.fraction;
  }
  return f;
}

std::vector<double> default_bin_edges() {
  std::vector<double> edges;
  for (int k = 0; k <= 20; ++k) edges.push_back(2.5 * k);
  return edges;
}

namespace {

std::optional<std::size_t> bin_of(const std::vector<double>& edges, double v) {
  if (edges.size() < 2 || v < edges.front() || v >= edges.back()) return std::nullopt;
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  return std::size_t(it - edges.begin()) - 1;
}

Curve empty_curve(const std::vector<double>& edges) {
  Curve c;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) c.push_back({edges[i], edges[i + 1], std::nullopt, 0});
  return c;
}

void finish_means(Curve& curve, const std::vector<double>& sums) {
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i].count > 0) curve[i].value = sums[i] / double(curve[i].count);
  }
}

}  // namespace

Curve accel_vs_distance(std::span<const Scene> scenes, const std::vector<double>& edges) {
  Curve curve = empty_curve(edges);
  std::vector<double> sums(curve.size(), 0.0);
  for (const Scene& s : scenes) {
    for (const Agent& a : s.agents) {
      if (a.is_ego()) continue;
      const auto dist = distance_to_ego(s, a);
      const auto kin = kinematics(a, s.dt);
      std::vector<double> peak(curve.size(), -1.0);
      for (std::size_t t = 0; t < dist.size(); ++t) {
        if (auto b = bin_of(edges, dist[t])) peak[*b] = std::max(peak[*b], kin.acceleration[t].norm());
      }
      for (std::size_t b = 0; b < curve.size(); ++b) {
        if (peak[b] < 0.0) continue;
        sums[b] += peak[b];
        ++curve[b].count;
      }
    }
  }
  finish_means(curve, sums);
  return curve;
}

Curve error_vs_proximity(std::span<const metrics::AgentRecord> records, const std::vector<double>& edges,
                         std::size_t horizon_index) {
  Curve curve = empty_curve(edges);
  std::vector<double> sums(curve.size(), 0.0);
  for (const auto& r : records) {
    if (auto b = bin_of(edges, r.closest_approach)) {
      sums[*b] += r.fde.at(horizon_index);
      ++curve[*b].count;
    }
  }
  finish_means(curve, sums);
  return curve;
}

std::optional<std::size_t> peak_bin(const Curve& curve) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (!curve[i].value) continue;
    if (!best || *curve[i].value > *curve[*best].value) best = i;
  }
  return best;
}

void write_curve_csv(std::ostream& out, const Curve& curve) {
  out << "bin_low,bin_high,value,count\n";
  for (const auto& b : curve) {
    out << b.low << ',' << b.high << ',';
    if (b.value) out << *b.value;
    out << ',' << b.count << '\n';
  }
}

void write_cdf_csv(std::ostream& out, const std::vector<CdfPoint>& cdf) {
  out << "distance,fraction\n";
  for (const auto& p : cdf) out << p.distance << ',' << p.fraction << '\n';
}

}  // namespace jvae::analysis
