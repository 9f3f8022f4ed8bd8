#include "jvae/inference.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace jvae::inference {

namespace {

// Rigid transform between the scene's own frame and the ego frame.
struct Frame {
  Vec2 origin;
  Vec2 heading{1.0, 0.0};

  Vec2 to_world(Vec2 p) const {
    return Vec2{p.x * heading.x - p.y * heading.y, p.x * heading.y + p.y * heading.x} + origin;
  }
};

Frame ego_frame(const Scene& scene) {
  const Agent& ego = scene.ego();
  Frame f;
  f.origin = scene.current(ego);
  if (scene.obs_len >= 2) {
    const Vec2 d = f.origin - ego.positions[std::size_t(scene.obs_len) - 2];
    if (d.norm() > 1e-9) f.heading = d / d.norm();
  }
  return f;
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t k) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(k), std::uint32_t(k >> 32),
                    0x5eedu};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (std::uint64_t(words[0]) << 32) | words[1];
}

// Scene stripped of everything after the observed window, so the sampler
// cannot touch ground truth even by accident.
Scene observed_only(const Scene& scene) {
  Scene s = scene;
  for (Agent& a : s.agents) a.positions.resize(std::size_t(scene.obs_len));
  return s;
}

}  // namespace

PredictionSet predict_in_order(const Scene& scene, const model::Model& model, std::size_t n_samples,
                               std::uint64_t seed, const PredictOptions& options) {
  if (n_samples == 0) throw std::invalid_argument("predict: at least one sample required");
  if (scene.agents.empty() || !scene.agents.front().is_ego()) {
    throw std::invalid_argument("predict: ego must be the first agent");
  }
  const Scene past = observed_only(scene);
  const std::size_t n = past.agents.size();
  const std::size_t L = model.hyper.latent;

  PredictionSet out;
  out.scene = scene;
  out.agents.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.agents[i].agent_id = scene.agents[i].id;

  diff::Tape tape;
  model::Network net(model, tape);
  const auto emb = net.encode_past(past);
  for (std::size_t k = 0; k < n_samples; ++k) {
    model::NoiseSource noise =
        options.zero_prior_variance ? model::NoiseSource::zeros() : model::NoiseSource(sample_seed(seed, k));
    std::vector<diff::Var> z;
    z.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto prior = net.prior_step(i, z, emb);
      z.push_back(net.sample_latent(prior, noise.draw(L)));
    }
    const model::Decoded dec = net.decode(past, z, emb);
    for (std::size_t i = 0; i < n; ++i) {
      Trajectory traj;
      traj.reserve(dec.positions.size());
      for (const auto& p : dec.positions) traj.push_back({p.value().at(i, 0), p.value().at(i, 1)});
      out.agents[i].samples.push_back(std::move(traj));
      if (options.keep_latents) {
        const auto v = z[i].value().data();
        out.agents[i].latents.emplace_back(v.begin(), v.end());
      }
    }
  }
  return out;
}

PredictionSet predict(const Scene& scene, const model::Model& model, std::size_t n_samples, std::uint64_t seed,
                      const PredictOptions& options) {
  if (n_samples == 0) throw std::invalid_argument("predict: at least one sample required");
  const Frame frame = ego_frame(scene);
  const Scene ordered = to_scene_frame(order_agents(scene));
  PredictionSet local = predict_in_order(ordered, model, n_samples, seed, options);

  PredictionSet out;
  out.scene = scene;
  for (const Agent& a : scene.agents) {
    AgentPrediction ap = local.of(a.id);
    for (auto& traj : ap.samples) {
      for (Vec2& p : traj) p = frame.to_world(p);
    }
    out.agents.push_back(std::move(ap));
  }
  return out;
}

std::vector<PredictionSet> predict_all(std::span<const Scene> scenes, const model::Model& model,
                                       std::size_t n_samples, std::uint64_t seed, const PredictOptions& options) {
  std::vector<PredictionSet> out;
  out.reserve(scenes.size());
  for (const Scene& s : scenes) out.push_back(predict(s, model, n_samples, seed, options));
  return out;
}

double energy_distance(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("energy_distance: empty sample set");
  auto mean_dist = [](std::span<const Vec2> x, std::span<const Vec2> y) {
    double total = 0.0;
    for (Vec2 p : x) {
      for (Vec2 q : y) total += (p - q).norm();
    }
    return total / double(x.size() * y.size());
  };
  return std::max(0.0, 2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b));
}

OrderReport order_sensitivity(const Scene& scene, const model::Model& model, std::size_t n_samples,
                              std::uint64_t seed, std::size_t orderings) {
  OrderReport report;
  const Scene canonical = to_scene_frame(order_agents(scene));
  const std::size_t n = canonical.agents.size();
  if (n < 3) return report;  // at most one non-ego agent: a single ordering

  const PredictionSet base = predict_in_order(canonical, model, n_samples, seed);
  auto endpoints = [](const AgentPrediction& ap) {
    std::vector<Vec2> pts;
    for (const auto& t : ap.samples) pts.push_back(t.back());
    return pts;
  };
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  for (std::size_t k = 0; k < orderings; ++k) {
    Scene permuted = canonical;
    std::shuffle(permuted.agents.begin() + 1, permuted.agents.end(), rng);
    const PredictionSet alt = predict_in_order(permuted, model, n_samples, seed);
    double total = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      const int id = canonical.agents[i].id;
      total += energy_distance(endpoints(base.of(id)), endpoints(alt.of(id)));
    }
    report.per_ordering.push_back(total / double(n - 1));
  }
  report.orderings = orderings;
  if (!report.per_ordering.empty()) {
    report.mean_shift = std::accumulate(report.per_ordering.begin(), report.per_ordering.end(), 0.0) /
                        double(report.per_ordering.size());
  }
  return report;
}

}  // namespace jvae::inference
