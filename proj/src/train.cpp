#include "jvae/train.hpp"

#include "jvae/inference.hpp"
#include "jvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace jvae::train {

using diff::Array;
using diff::Var;

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train: ") + what);
  };
  require(c.beta > 0.0, "beta must be positive");
  require(c.lr > 0.0, "lr must be positive");
  require(c.lr_decay > 0.0 && c.lr_decay <= 1.0, "lr_decay must be in (0, 1]");
  require(c.steps >= 0, "steps must be non-negative");
  require(c.batch_scenes > 0, "batch_scenes must be positive");
  require(c.clip_norm > 0.0, "clip_norm must be positive");
  require(c.eval_every >= 0, "eval_every must be non-negative");
  require(c.eval_samples > 0, "eval_samples must be positive");
  require(c.eval_horizon_s > 0.0, "eval_horizon_s must be positive");
  model::validate(c.hyper);
}

Scene prepare(const Scene& scene) { return to_scene_frame(order_agents(scene)); }

namespace {

void check_finite(double v, const std::string& scene_id, const char* term) {
  if (!std::isfinite(v)) {
    throw NumericalError("non-finite " + std::string(term) + " in scene " + scene_id, -1, scene_id, term);
  }
}

}  // namespace

ElboGraph build_elbo(model::Network& net, const Scene& scene, model::NoiseSource& noise, double beta) {
  const std::size_t n = scene.agents.size();
  const std::size_t L = net.model().hyper.latent;
  auto emb = net.encode_past(scene);
  net.encode_future(scene, emb);

  ElboGraph g;
  std::vector<Var> z;
  z.reserve(n);
  Var kl_total;
  for (std::size_t i = 0; i < n; ++i) {
    const auto q = net.posterior_step(i, z, emb);
    const auto p = net.prior_step(i, z, emb);
    const Var kl = model::kl_divergence(q, p);
    const double kv = kl.value()[0];
    check_finite(kv, scene.scene_id, "kl");
    g.terms.kl_per_agent.push_back(kv);
    kl_total = i == 0 ? kl : diff::add(kl_total, kl);
    z.push_back(net.sample_latent(q, noise.draw(L)));
  }
  const auto decoded = net.decode(scene, z, emb);
  const auto rec = model::reconstruction_nll(scene, decoded);

  g.terms.recon = rec.total.value()[0];
  check_finite(g.terms.recon, scene.scene_id, "reconstruction");
  g.terms.recon_per_agent = rec.per_agent;
  g.terms.kl = kl_total.value()[0];
  g.loss = diff::add(rec.total, diff::scale(kl_total, beta));
  g.terms.loss = g.loss.value()[0];
  check_finite(g.terms.loss, scene.scene_id, "loss");
  return g;
}

ElboTerms elbo(const model::Model& model, const Scene& scene, model::NoiseSource& noise, double beta) {
  diff::Tape tape;
  model::Network net(model, tape);
  return build_elbo(net, scene, noise, beta).terms;
}

IwBound importance_weighted_bound(const model::Model& model, const Scene& scene, std::size_t k,
                                  std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("importance_weighted_bound: k must be positive");
  const std::size_t n = scene.agents.size();
  const std::size_t L = model.hyper.latent;
  model::NoiseSource noise(seed);
  IwBound out;
  for (std::size_t s = 0; s < k; ++s) {
    diff::Tape tape;
    model::Network net(model, tape);
    auto emb = net.encode_past(scene);
    net.encode_future(scene, emb);
    std::vector<Var> z;
    double log_q = 0.0;
    double log_p = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto q = net.posterior_step(i, z, emb);
      const auto p = net.prior_step(i, z, emb);
      z.push_back(net.sample_latent(q, noise.draw(L)));
      const auto zi = z.back().value().data();
      log_q += model::gaussian_log_density(q.mean.value().data(), q.log_var.value().data(), zi);
      log_p += model::gaussian_log_density(p.mean.value().data(), p.log_var.value().data(), zi);
    }
    const auto rec = model::reconstruction_nll(scene, net.decode(scene, z, emb));
    out.log_weights.push_back(-rec.total.value()[0] + log_p - log_q);
  }
  const double m = *std::max_element(out.log_weights.begin(), out.log_weights.end());
  double acc = 0.0;
  for (double w : out.log_weights) acc += std::exp(w - m);
  out.bound = m + std::log(acc / double(k));
  out.mean_log_weight = std::accumulate(out.log_weights.begin(), out.log_weights.end(), 0.0) / double(k);
  return out;
}

double mean_fde(std::span<const Scene> scenes, const model::Model& model, std::size_t n_samples,
                double horizon_s, std::uint64_t seed) {
  double total = 0.0;
  std::size_t count = 0;
  for (const Scene& s : scenes) {
    const std::size_t step = metrics::horizon_step(horizon_s, s.dt);
    const PredictionSet pred = inference::predict(s, model, n_samples, seed);
    for (const Agent& a : s.agents) {
      if (a.is_ego()) continue;
      total += metrics::fde_best_of_n(pred.of(a.id).samples, s.future(a), step);
      ++count;
    }
  }
  return count ? total / double(count) : 0.0;
}

void write_log_csv(std::ostream& out, const TrainLog& log) {
  const auto old = out.precision(12);
  out << "step,phase,loss,recon,kl,lr\n";
  for (const auto& r : log.steps) {
    out << r.step << ',' << (r.phase == Phase::a ? 'A' : 'B') << ',' << r.loss << ',' << r.recon << ',' << r.kl
        << ',' << r.lr << '\n';
  }
  out.precision(old);
}

void write_eval_csv(std::ostream& out, const TrainLog& log) {
  const auto old = out.precision(12);
  out << "step,val_fde\n";
  for (const auto& e : log.evals) out << e.step << ',' << e.val_fde << '\n';
  out.precision(old);
}

namespace {

struct AdamSlot {
  Array m;
  Array v;
  long t = 0;
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-8;

bool updated_in(model::Group g, Phase phase) {
  return phase == Phase::a ? g != model::Group::prior : g == model::Group::prior;
}

}  // namespace

TrainResult train(const SplitDataset& data, const TrainConfig& config) {
  validate(config);
  if (data.train.empty()) throw std::invalid_argument("train: the train split is empty");
  model::Hyper hyper = config.hyper;
  hyper.init_seed = config.seed;
  TrainResult result{model::build_variant(config.variant, hyper), {}, -1};
  if (config.steps == 0) return result;

  model::Model& model = result.model;
  const double beta = model.effective_beta(config.beta);
  std::vector<Scene> train_set;
  for (const Scene& s : data.train) train_set.push_back(prepare(s));
  std::vector<Scene> val_set = data.val;
  if (config.eval_scenes > 0 && val_set.size() > std::size_t(config.eval_scenes)) {
    val_set.resize(std::size_t(config.eval_scenes));
  }

  const std::size_t n_params = model.params.params.size();
  std::vector<AdamSlot> adam(n_params);
  for (std::size_t p = 0; p < n_params; ++p) {
    adam[p].m = Array::zeros_like(model.params.params[p].value);
    adam[p].v = adam[p].m;
  }

  std::mt19937_64 order_rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), order_rng);
  std::size_t cursor = 0;
  model::NoiseSource noise(config.seed ^ 0x6a09e667f3bcc908ull);

  std::optional<model::Model> best;
  double best_fde = std::numeric_limits<double>::infinity();

  for (int step = 0; step < config.steps; ++step) {
    const Phase phase = step % 2 == 0 ? Phase::a : Phase::b;
    const double lr = config.lr * std::pow(config.lr_decay, double(step));
    model::NetworkOptions opts;
    opts.train_posterior = phase == Phase::a;
    opts.train_decoder = phase == Phase::a;
    opts.train_prior = phase == Phase::b;

    std::vector<Array> grad(n_params);
    StepRecord rec{step, phase, 0.0, 0.0, 0.0, lr};
    const std::size_t batch = std::size_t(config.batch_scenes);
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const Scene& scene = train_set[order[cursor++]];
      diff::Tape tape;
      model::Network net(model, tape, opts);
      ElboGraph g;
      try {
        g = build_elbo(net, scene, noise, beta);
      } catch (NumericalError& e) {
        NumericalError err("step " + std::to_string(step) + ": " + e.what(), step, e.scene_id, e.term);
        err.last_good = model;
        throw err;
      }
      if (g.terms.loss > config.divergence_loss) {
        NumericalError err("step " + std::to_string(step) + ": loss " + std::to_string(g.terms.loss) +
                               " diverged in scene " + scene.scene_id,
                           step, scene.scene_id, "loss");
        err.last_good = model;
        throw err;
      }
      rec.loss += g.terms.loss / double(batch);
      rec.recon += g.terms.recon / double(batch);
      rec.kl += g.terms.kl / double(batch);
      const diff::Gradients grads = tape.backward(g.loss);
      for (const auto& [idx, var] : net.bound()) {
        if (!updated_in(model.params.params[idx].group, phase)) continue;
        const Array* gv = grads.find(var.id);
        if (!gv) continue;
        if (grad[idx].empty()) grad[idx] = Array::zeros_like(*gv);
        grad[idx].mat() += gv->mat() / double(batch);
      }
    }

    double sq = 0.0;
    for (const auto& g : grad) {
      if (!g.empty()) sq += g.mat().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
      NumericalError err("step " + std::to_string(step) + ": non-finite gradient", step, "", "gradient");
      err.last_good = model;
      throw err;
    }
    const double clip = norm > config.clip_norm ? config.clip_norm / norm : 1.0;

    for (std::size_t p = 0; p < n_params; ++p) {
      if (grad[p].empty()) continue;
      AdamSlot& s = adam[p];
      ++s.t;
      auto g = grad[p].mat().array() * clip;
      s.m.mat().array() = kBeta1 * s.m.mat().array() + (1.0 - kBeta1) * g;
      s.v.mat().array() = kBeta2 * s.v.mat().array() + (1.0 - kBeta2) * g.square();
      const double c1 = 1.0 - std::pow(kBeta1, double(s.t));
      const double c2 = 1.0 - std::pow(kBeta2, double(s.t));
      model.params.params[p].value.mat().array() -=
          lr * (s.m.mat().array() / c1) / ((s.v.mat().array() / c2).sqrt() + kEpsilon);
    }
    model::clamp_parameters(model);
    result.log.steps.push_back(rec);

    const bool last = step + 1 == config.steps;
    if (!val_set.empty() && (last || (config.eval_every > 0 && (step + 1) % config.eval_every == 0))) {
      const double fde = mean_fde(val_set, model, std::size_t(config.eval_samples), config.eval_horizon_s,
                                  config.seed);
      result.log.evals.push_back({step + 1, fde});
      if (fde < best_fde) {
        best_fde = fde;
        best = model;
        result.best_step = step + 1;
      }
    }
  }
  if (best) result.model = std::move(*best);
  else result.best_step = config.steps;
  return result;
}

}  // namespace jvae::train
