#pragma once

#include "jvae/diff.hpp"
#include "jvae/model.hpp"
#include "jvae/scene.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace testing {

using jvae::Agent;
using jvae::AgentKind;
using jvae::Scene;
using jvae::Vec2;

inline Agent straight_agent(int id, AgentKind kind, Vec2 start, Vec2 step, std::size_t len) {
  Agent a;
  a.id = id;
  a.kind = kind;
  for (std::size_t t = 0; t < len; ++t) a.positions.push_back(start + step * double(t));
  return a;
}

// Ego plus `others` pedestrians on straight lines, obs_len 2, pred_len 6.
inline Scene line_scene(std::size_t others, std::uint64_t seed = 1, int obs_len = 2, int pred_len = 6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Scene s;
  s.scene_id = "fixture-" + std::to_string(seed);
  s.obs_len = obs_len;
  s.pred_len = pred_len;
  const std::size_t len = std::size_t(obs_len + pred_len);
  s.agents.push_back(straight_agent(0, AgentKind::ego_vehicle, {-double(obs_len - 1) * 3.0, 0.0}, {3.0, 0.0}, len));
  for (std::size_t k = 0; k < others; ++k) {
    const Vec2 start{4.0 * double(k + 1) + u(rng), 3.0 * u(rng) + (k % 2 ? 4.0 : -4.0)};
    Agent a = straight_agent(int(k + 1), AgentKind::pedestrian, start, {0.3 * u(rng), 0.6 * u(rng)}, len);
    for (auto& p : a.positions) p += Vec2{0.05 * u(rng), 0.05 * u(rng)};
    s.agents.push_back(std::move(a));
  }
  return s;
}

inline jvae::model::Hyper tiny_hyper() {
  jvae::model::Hyper h;
  h.hidden = 6;
  h.latent = 3;
  h.attn_hidden = 4;
  h.value_dim = 4;
  return h;
}

// Overwrite every parameter with uniform noise so no head is trivially zero.
inline void randomize(jvae::model::Model& m, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& p : m.params.params) {
    for (double& v : p.value.data()) v = u(rng);
  }
  jvae::model::clamp_parameters(m);
}

inline jvae::model::Model random_model(jvae::model::Variant v, std::uint64_t seed = 3,
                                       jvae::model::Hyper h = tiny_hyper()) {
  auto m = jvae::model::build_variant(v, h);
  randomize(m, seed);
  return m;
}

// Central difference of f with respect to x.
inline double central_difference(const std::function<double()>& f, double& x, double eps = 1e-6) {
  const double keep = x;
  x = keep + eps;
  const double hi = f();
  x = keep - eps;
  const double lo = f();
  x = keep;
  return (hi - lo) / (2.0 * eps);
}

// Norm-wise relative error between two gradient vectors.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

inline std::vector<double> to_vector(const jvae::diff::Array& a) { return {a.data().begin(), a.data().end()}; }

struct Chain {
  std::vector<std::vector<double>> post_mean, post_log_var, prior_mean, prior_log_var, z;
  std::vector<std::vector<double>> attention;
  std::vector<std::vector<Vec2>> decoded;  // per agent
  double recon = 0.0;
};

// Posterior chain with noise fixed by `seed`, prior evaluated on the same
// latents, then the decoder.
inline Chain run_chain(const jvae::model::Model& m, const Scene& s, std::uint64_t seed = 11,
                       jvae::model::NetworkOptions opts = {}) {
  jvae::diff::Tape tape;
  jvae::model::Network net(m, tape, opts);
  auto emb = net.encode_past(s);
  net.encode_future(s, emb);
  jvae::model::NoiseSource noise(seed);
  Chain c;
  std::vector<jvae::diff::Var> z;
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto q = net.posterior_step(i, z, emb);
    const auto p = net.prior_step(i, z, emb);
    z.push_back(net.sample_latent(q, noise.draw(m.hyper.latent)));
    c.post_mean.push_back(to_vector(q.mean.value()));
    c.post_log_var.push_back(to_vector(q.log_var.value()));
    c.prior_mean.push_back(to_vector(p.mean.value()));
    c.prior_log_var.push_back(to_vector(p.log_var.value()));
    c.z.push_back(to_vector(z.back().value()));
    c.attention.push_back(q.attention);
  }
  const auto dec = net.decode(s, z, emb);
  c.decoded.resize(s.agents.size());
  for (const auto& step : dec.positions) {
    for (std::size_t i = 0; i < s.agents.size(); ++i) c.decoded[i].push_back({step.value().at(i, 0), step.value().at(i, 1)});
  }
  c.recon = jvae::model::reconstruction_nll(s, dec).total.value()[0];
  return c;
}

inline void perturb_agent(Scene& s, std::size_t i, double amount, bool past, bool future) {
  for (int t = 0; t < s.obs_len + s.pred_len; ++t) {
    const bool in_past = t < s.obs_len;
    if ((in_past && past) || (!in_past && future)) s.agents[i].positions[std::size_t(t)] += Vec2{amount, -amount};
  }
}

// Gaussian mixture log-density written out from the definition.
inline double mixture_log_density(const std::vector<Vec2>& pts, Vec2 q) {
  const double n = double(pts.size());
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += p.x / n;
    my += p.y / n;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : pts) {
    sxx += (p.x - mx) * (p.x - mx) / (n - 1);
    sxy += (p.x - mx) * (p.y - my) / (n - 1);
    syy += (p.y - my) * (p.y - my) / (n - 1);
  }
  const double f2 = std::pow(n, -1.0 / 3.0);
  const double a = f2 * (sxx + 1e-6), b = f2 * sxy, d = f2 * (syy + 1e-6);
  const double det = a * d - b * b;
  std::vector<double> terms;
  for (const auto& p : pts) {
    const double dx = q.x - p.x, dy = q.y - p.y;
    const double maha = (d * dx * dx - 2 * b * dx * dy + a * dy * dy) / det;
    terms.push_back(-0.5 * maha - std::log(2 * std::numbers::pi) - 0.5 * std::log(det));
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double s = 0;
  for (double t : terms) s += std::exp(t - top);
  return top + std::log(s / n);
}

}  // namespace testing
