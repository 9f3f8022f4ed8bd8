#include "jvae/model.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace jvae::model {

using diff::Array;
using diff::Var;

namespace {

constexpr double kPositionScale = 0.1;
constexpr double kVelocityScale = 0.2;
constexpr double kDisplacementScale = 0.5;
// Gain on the skip path; constant velocity sits at dec_skip.w = I / (kSkipGain * kDisplacementScale),
// close enough to zero for Adam to reach in a few dozen steps.
constexpr double kSkipGain = 8.0;

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::cvae: return "cvae";
    case Variant::beta_cvae: return "beta_cvae";
    case Variant::joint_beta_cvae: return "joint_beta_cvae";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  if (text == "cvae") return Variant::cvae;
  if (text == "beta_cvae") return Variant::beta_cvae;
  if (text == "joint_beta_cvae" || text == "joint") return Variant::joint_beta_cvae;
  throw std::invalid_argument("unknown model variant '" + std::string(text) + "'");
}

std::string_view to_string(Group g) {
  switch (g) {
    case Group::posterior: return "posterior";
    case Group::prior: return "prior";
    case Group::decoder: return "decoder";
  }
  return "?";
}

void validate(const Hyper& h) {
  if (h.hidden == 0 || h.latent == 0 || h.attn_hidden == 0 || h.value_dim == 0) {
    throw std::invalid_argument("model sizes must be positive");
  }
}

bool ModelParams::contains(std::string_view name) const {
  return std::any_of(params.begin(), params.end(), [&](const Param& p) { return p.name == name; });
}

std::size_t ModelParams::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

bool ModelParams::all_finite() const {
  return std::all_of(params.begin(), params.end(), [](const Param& p) { return p.value.all_finite(); });
}

// ---------------------------------------------------------------------------
// Construction

namespace {

enum class Init { uniform, orthogonal, zeros };

class Builder {
 public:
  explicit Builder(std::uint64_t seed) : rng_(seed) {}

  void add(std::string name, Group group, std::vector<std::size_t> shape, Init init) {
    Array a(std::move(shape));
    switch (init) {
      case Init::zeros:
        break;
      case Init::uniform: {
        const double bound = 1.0 / std::sqrt(double(a.rows() > 1 || a.rank() == 2 ? a.rows() : a.cols()));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& v : a.data()) v = u(rng_);
        break;
      }
      case Init::orthogonal: {
        // Square orthogonal blocks side by side, one per gate.
        const auto n = Eigen::Index(a.rows());
        std::normal_distribution<double> g(0.0, 1.0);
        for (Eigen::Index block = 0; block * n < Eigen::Index(a.cols()); ++block) {
          diff::Matrix m(n, n);
          for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < n; ++c) m(r, c) = g(rng_);
          }
          Eigen::HouseholderQR<diff::Matrix> qr(m);
          diff::Matrix q = qr.householderQ();
          const diff::Matrix rr = qr.matrixQR().triangularView<Eigen::Upper>();
          for (Eigen::Index c = 0; c < n; ++c) {
            if (rr(c, c) < 0) q.col(c) *= -1.0;
          }
          a.mat().middleCols(block * n, n) = q;
        }
        break;
      }
    }
    params_.params.push_back({std::move(name), group, std::move(a)});
  }

  void gru(const std::string& prefix, Group group, std::size_t in, std::size_t hidden) {
    add(prefix + ".wx", group, {in, 3 * hidden}, Init::uniform);
    add(prefix + ".wh", group, {hidden, 3 * hidden}, Init::orthogonal);
    add(prefix + ".b", group, {3 * hidden}, Init::zeros);
  }

  void attention(const std::string& prefix, Group group, std::size_t query, std::size_t key, std::size_t value_in,
                 const Hyper& h) {
    add(prefix + ".wq", group, {query, h.attn_hidden}, Init::uniform);
    add(prefix + ".wk", group, {key, h.attn_hidden}, Init::uniform);
    add(prefix + ".b1", group, {h.attn_hidden}, Init::zeros);
    add(prefix + ".w2", group, {h.attn_hidden, 1}, Init::uniform);
    add(prefix + ".wv", group, {value_in, h.value_dim}, Init::uniform);
    add(prefix + ".bv", group, {h.value_dim}, Init::zeros);
  }

  void gaussian_head(const std::string& prefix, Group group, std::size_t in, const Hyper& h) {
    add(prefix + ".w1", group, {in, h.hidden}, Init::uniform);
    add(prefix + ".b1", group, {h.hidden}, Init::zeros);
    add(prefix + ".wm", group, {h.hidden, h.latent}, Init::zeros);
    add(prefix + ".bm", group, {h.latent}, Init::zeros);
    add(prefix + ".wl", group, {h.hidden, h.latent}, Init::zeros);
    add(prefix + ".bl", group, {h.latent}, Init::zeros);
  }

  ModelParams take() { return std::move(params_); }

 private:
  std::mt19937_64 rng_;
  ModelParams params_;
};

}  // namespace

Model build_variant(Variant kind, Hyper hyper) {
  hyper.variant = kind;
  validate(hyper);
  const std::size_t H = hyper.hidden;
  const std::size_t L = hyper.latent;
  const std::size_t V = hyper.value_dim;
  Builder b(hyper.init_seed);
  const bool joint = kind == Variant::joint_beta_cvae;

  b.gru("enc_past", Group::posterior, kStepFeatures, H);
  b.gru("enc_future", Group::posterior, kFutureFeatures, H);
  if (joint) b.attention("post_attn", Group::posterior, 2 * H, 2 * H + L + 2, 2 * H + L, hyper);
  b.add("post_null", Group::posterior, {V}, Init::zeros);
  b.gaussian_head("post_head", Group::posterior, 2 * H + V, hyper);

  if (joint) b.attention("prior_attn", Group::prior, H, H + L + 2, H + L, hyper);
  b.add("prior_null", Group::prior, {V}, Init::zeros);
  b.gaussian_head("prior_head", Group::prior, H + V, hyper);

  if (joint) b.attention("dec_attn", Group::decoder, H, H + L + 2, H + L, hyper);
  b.add("dec_null", Group::decoder, {V}, Init::zeros);
  b.add("dec_init.w", Group::decoder, {H + L + V, H}, Init::uniform);
  b.add("dec_init.b", Group::decoder, {H}, Init::zeros);
  b.gru("dec_gru", Group::decoder, L + 2, H);
  b.add("dec_out.w", Group::decoder, {H, 2}, Init::zeros);
  b.add("dec_out.b", Group::decoder, {2}, Init::zeros);
  // Linear path from the previous displacement to the next one.
  b.add("dec_skip.w", Group::decoder, {2, 2}, Init::zeros);
  if (kind != Variant::cvae) b.add("log_sigma2", Group::decoder, {2}, Init::zeros);

  return Model{hyper, b.take()};
}

void clamp_parameters(Model& model) {
  if (!model.params.contains("log_sigma2")) return;
  for (double& v : model.params.at("log_sigma2").data()) v = std::clamp(v, kLogSigma2Min, kLogSigma2Max);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointMagic = "jvae-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(std::ostream& out, const Model& model) {
  const Hyper& h = model.hyper;
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "variant " << to_string(h.variant) << '\n';
  out << "hidden " << h.hidden << '\n';
  out << "latent " << h.latent << '\n';
  out << "attn_hidden " << h.attn_hidden << '\n';
  out << "value_dim " << h.value_dim << '\n';
  out << "ego_conditioning " << (h.ego_conditioning ? 1 : 0) << '\n';
  out << "init_seed " << h.init_seed << '\n';
  out << "params " << model.params.params.size() << '\n';
  out << std::setprecision(17);
  for (const auto& p : model.params.params) {
    out << p.name << ' ' << p.value.rank();
    for (auto e : p.value.shape()) out << ' ' << e;
    out << '\n';
    for (std::size_t k = 0; k < p.value.size(); ++k) out << (k ? " " : "") << p.value[k];
    out << '\n';
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  save_checkpoint(out, model);
}

Model load_checkpoint(std::istream& in) {
  auto fail = [](const std::string& what) -> void { throw std::runtime_error("checkpoint: " + what); };
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic) fail("not a checkpoint file");
  if (version != kCheckpointVersion) fail("unsupported version " + std::to_string(version));
  Hyper h;
  auto expect = [&](const char* key) {
    std::string k;
    in >> k;
    if (k != key) fail(std::string("expected '") + key + "', found '" + k + "'");
  };
  std::string variant;
  expect("variant");
  in >> variant;
  expect("hidden");
  in >> h.hidden;
  expect("latent");
  in >> h.latent;
  expect("attn_hidden");
  in >> h.attn_hidden;
  expect("value_dim");
  in >> h.value_dim;
  int ego = 1;
  expect("ego_conditioning");
  in >> ego;
  h.ego_conditioning = ego != 0;
  expect("init_seed");
  in >> h.init_seed;
  std::size_t count = 0;
  expect("params");
  in >> count;
  if (!in) fail("truncated header");

  Model model = build_variant(parse_variant(variant), h);
  if (count != model.params.params.size()) {
    fail("expected " + std::to_string(model.params.params.size()) + " parameters, found " + std::to_string(count));
  }
  std::vector<bool> seen(count, false);
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    std::size_t rank = 0;
    in >> name >> rank;
    if (!in || rank == 0 || rank > 2) fail("malformed parameter header");
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) in >> e;
    if (!model.params.contains(name)) fail("unknown parameter '" + name + "'");
    const std::size_t idx = model.params.index_of(name);
    Array& target = model.params.params[idx].value;
    if (shape != target.shape()) {
      fail("shape mismatch for '" + name + "': file " + diff::shape_string(shape) + ", model " +
           target.shape_string());
    }
    for (double& v : target.data()) in >> v;
    if (!in) fail("truncated values for '" + name + "'");
    seen[idx] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) fail("missing parameters");
  return model;
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

// ---------------------------------------------------------------------------
// Noise

Array NoiseSource::draw(std::size_t dim) {
  Array a({dim});
  if (!zero_) {
    for (double& v : a.data()) v = normal_(rng_);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Features

Array past_features(const Scene& scene, std::size_t step) {
  Array f({scene.agents.size(), kStepFeatures});
  for (std::size_t i = 0; i < scene.agents.size(); ++i) {
    const Agent& a = scene.agents[i];
    const Vec2 p = a.positions[step];
    Vec2 v;
    if (step > 0) v = (p - a.positions[step - 1]) / scene.dt;
    else if (scene.obs_len > 1) v = (a.positions[1] - p) / scene.dt;
    f.at(i, 0) = p.x * kPositionScale;
    f.at(i, 1) = p.y * kPositionScale;
    f.at(i, 2) = v.x * kVelocityScale;
    f.at(i, 3) = v.y * kVelocityScale;
    f.at(i, 4 + std::size_t(a.kind)) = 1.0;
  }
  return f;
}

Array future_features(const Scene& scene, std::size_t step) {
  Array f({scene.agents.size(), kFutureFeatures});
  const std::size_t t = std::size_t(scene.obs_len) + step;
  for (std::size_t i = 0; i < scene.agents.size(); ++i) {
    const Agent& a = scene.agents[i];
    const Vec2 p = a.positions[t];
    const Vec2 d = p - a.positions[t - 1];
    f.at(i, 0) = p.x * kPositionScale;
    f.at(i, 1) = p.y * kPositionScale;
    f.at(i, 2) = d.x * kDisplacementScale;
    f.at(i, 3) = d.y * kDisplacementScale;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(const Model& model, diff::Tape& tape, NetworkOptions options)
    : model_(model), tape_(tape), options_(options), vars_(model.params.params.size()) {}

Var Network::param(std::string_view name) {
  const std::size_t idx = model_.params.index_of(name);
  if (!vars_[idx]) {
    const Param& p = model_.params.params[idx];
    const bool trainable = (p.group == Group::posterior && options_.train_posterior) ||
                           (p.group == Group::prior && options_.train_prior) ||
                           (p.group == Group::decoder && options_.train_decoder);
    vars_[idx] = tape_.parameter(p.value, trainable);
    bound_.emplace_back(idx, *vars_[idx]);
  }
  return *vars_[idx];
}

namespace {

diff::GruParams gru_params(Network& net, const std::string& prefix) {
  return {net.param(prefix + ".wx"), net.param(prefix + ".wh"), net.param(prefix + ".b")};
}

Var run_encoder(Network& net, const std::string& prefix, std::size_t rows, std::size_t hidden, std::size_t steps,
                const std::function<Array(std::size_t)>& features) {
  diff::Tape& tape = net.tape();
  const auto params = gru_params(net, prefix);
  Var h = tape.constant(Array({rows, hidden}));
  for (std::size_t t = 0; t < steps; ++t) h = diff::gru_cell(tape.constant(features(t)), h, params);
  return h;
}

}  // namespace

std::vector<AgentEmbedding> Network::encode_past(const Scene& scene) {
  const std::size_t n = scene.agents.size();
  const Var codes = run_encoder(*this, "enc_past", n, model_.hyper.hidden, std::size_t(scene.obs_len),
                                [&](std::size_t t) { return past_features(scene, t); });
  std::vector<AgentEmbedding> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].past_code = n == 1 ? codes : diff::slice(codes, i, i + 1, 0);
    out[i].location = scene.current(scene.agents[i]);
    out[i].ego = scene.agents[i].is_ego();
  }
  return out;
}

void Network::encode_future(const Scene& scene, std::vector<AgentEmbedding>& emb) {
  const std::size_t n = scene.agents.size();
  const Var codes = run_encoder(*this, "enc_future", n, model_.hyper.hidden, std::size_t(scene.pred_len),
                                [&](std::size_t t) { return future_features(scene, t); });
  for (std::size_t i = 0; i < n; ++i) emb[i].future_code = n == 1 ? codes : diff::slice(codes, i, i + 1, 0);
}

std::vector<std::size_t> Network::context_of(std::size_t i, std::span<const AgentEmbedding> emb) const {
  std::vector<std::size_t> ctx;
  if (!model_.has_attention() || options_.force_null_context) return ctx;
  const bool mask_ego = !model_.hyper.ego_conditioning;
  if (mask_ego && emb[i].ego) return ctx;
  for (std::size_t j = 0; j < i; ++j) {
    if (mask_ego && emb[j].ego) continue;
    ctx.push_back(j);
  }
  return ctx;
}

namespace {

const char* prefix_of(int side) {
  static const char* names[] = {"post", "prior", "dec"};
  return names[side];
}

Var future_code_of(const AgentEmbedding& e) {
  if (!e.future_code) throw std::logic_error("posterior requires future codes (training only)");
  return *e.future_code;
}

}  // namespace

Var Network::attend(Side side, std::size_t i, std::span<const Var> z_prev, std::span<const AgentEmbedding> emb,
                    std::vector<double>* weights, std::vector<std::size_t>* context) {
  const std::string prefix = prefix_of(int(side));
  const auto ctx_agents = context_of(i, emb);
  if (context) *context = ctx_agents;
  if (ctx_agents.empty()) return param(prefix + "_null");
  if (z_prev.size() < ctx_agents.back() + 1) throw std::logic_error("attention: latent for an earlier agent missing");

  auto codes = [&](std::size_t k) {
    return side == Side::posterior ? diff::concat({emb[k].past_code, future_code_of(emb[k])}) : emb[k].past_code;
  };
  const std::string attn = prefix + "_attn";
  const Var query = diff::linear(codes(i), param(attn + ".wq"), param(attn + ".b1"));
  std::vector<Var> key_rows;
  std::vector<Var> value_rows;
  for (std::size_t j : ctx_agents) {
    const Vec2 rel = (emb[j].location - emb[i].location) * kPositionScale;
    const Var cj = codes(j);
    key_rows.push_back(diff::concat({cj, z_prev[j], tape_.constant(Array::vector({rel.x, rel.y}))}));
    value_rows.push_back(diff::concat({cj, z_prev[j]}));
  }
  const Var keys = diff::concat(key_rows, 0);
  const Var hidden = diff::tanh(diff::add(diff::matmul(keys, param(attn + ".wk")), query));
  const Var scores = diff::reshape(diff::matmul(hidden, param(attn + ".w2")), {ctx_agents.size()});
  const Var alpha = diff::softmax(scores);
  const Var values = diff::tanh(diff::linear(diff::concat(value_rows, 0), param(attn + ".wv"), param(attn + ".bv")));
  if (weights) {
    const auto a = alpha.value().data();
    weights->assign(a.begin(), a.end());
  }
  return diff::matmul(alpha, values);
}

GaussianLatent Network::head(Side side, Var features, Var ctx) {
  const std::string prefix = std::string(prefix_of(int(side))) + "_head";
  const std::size_t L = model_.hyper.latent;
  const Var h = diff::tanh(diff::linear(diff::concat({features, ctx}), param(prefix + ".w1"), param(prefix + ".b1")));
  GaussianLatent g;
  g.mean = diff::reshape(diff::linear(h, param(prefix + ".wm"), param(prefix + ".bm")), {L});
  g.log_var = diff::clamp(diff::reshape(diff::linear(h, param(prefix + ".wl"), param(prefix + ".bl")), {L}),
                          kLogVarMin, kLogVarMax);
  return g;
}

GaussianLatent Network::posterior_step(std::size_t i, std::span<const Var> z_prev,
                                       std::span<const AgentEmbedding> emb) {
  std::vector<double> w;
  std::vector<std::size_t> ctx_agents;
  const Var ctx = attend(Side::posterior, i, z_prev, emb, &w, &ctx_agents);
  GaussianLatent g = head(Side::posterior, diff::concat({emb[i].past_code, future_code_of(emb[i])}), ctx);
  g.attention = std::move(w);
  g.context = std::move(ctx_agents);
  return g;
}

GaussianLatent Network::prior_step(std::size_t i, std::span<const Var> z_prev, std::span<const AgentEmbedding> emb) {
  std::vector<double> w;
  std::vector<std::size_t> ctx_agents;
  const Var ctx = attend(Side::prior, i, z_prev, emb, &w, &ctx_agents);
  GaussianLatent g = head(Side::prior, emb[i].past_code, ctx);
  g.attention = std::move(w);
  g.context = std::move(ctx_agents);
  return g;
}

Var Network::sample_latent(const GaussianLatent& g, const Array& noise) {
  if (noise.size() != g.mean.value().size()) throw diff::ShapeError("sample_latent: noise dimension mismatch");
  const Var std_dev = diff::exp(diff::scale(g.log_var, 0.5));
  return diff::add(g.mean, diff::mul(std_dev, tape_.constant(noise)));
}

Decoded Network::decode(const Scene& scene, std::span<const Var> z, std::span<const AgentEmbedding> emb) {
  const std::size_t n = scene.agents.size();
  if (z.size() != n) throw std::logic_error("decode: one latent per agent required");
  std::vector<Var> init_rows;
  for (std::size_t i = 0; i < n; ++i) {
    const Var ctx = attend(Side::decoder, i, z, emb, nullptr, nullptr);
    init_rows.push_back(diff::concat({emb[i].past_code, z[i], ctx}));
  }
  Var h = diff::tanh(diff::linear(n == 1 ? init_rows[0] : diff::concat(init_rows, 0), param("dec_init.w"),
                                  param("dec_init.b")));
  const Var zmat = n == 1 ? diff::reshape(z[0], {1, model_.hyper.latent}) : diff::concat(z, 0);

  Array last({n, 2});
  Array prev({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const Agent& a = scene.agents[i];
    const Vec2 p = scene.current(a);
    const Vec2 d = scene.obs_len > 1 ? p - a.positions[std::size_t(scene.obs_len) - 2] : Vec2{};
    last.at(i, 0) = p.x;
    last.at(i, 1) = p.y;
    prev.at(i, 0) = d.x * kDisplacementScale;
    prev.at(i, 1) = d.y * kDisplacementScale;
  }
  const auto gru = gru_params(*this, "dec_gru");
  const Var w_out = param("dec_out.w");
  const Var b_out = param("dec_out.b");
  const Var w_skip = param("dec_skip.w");
  Var pos = tape_.constant(std::move(last));
  Var feedback = tape_.constant(std::move(prev));
  Decoded out;
  for (int t = 0; t < scene.pred_len; ++t) {
    h = diff::gru_cell(diff::concat({zmat, feedback}), h, gru);
    const Var step = diff::add(diff::linear(h, w_out, b_out), diff::scale(diff::matmul(feedback, w_skip), kSkipGain));
    pos = diff::add(pos, step);
    feedback = diff::scale(step, kDisplacementScale);
    out.positions.push_back(pos);
  }
  out.log_sigma2 = model_.learns_noise()
                       ? diff::clamp(param("log_sigma2"), kLogSigma2Min, kLogSigma2Max)
                       : tape_.constant(Array({2}));
  return out;
}

// ---------------------------------------------------------------------------
// Densities

Var kl_divergence(const GaussianLatent& q, const GaussianLatent& p) {
  // ½ Σ [lv_p − lv_q + (e^{lv_q} + (μ_q − μ_p)²) e^{−lv_p} − 1]
  const Var diff_mean = diff::sub(q.mean, p.mean);
  const Var num = diff::add(diff::exp(q.log_var), diff::square(diff_mean));
  const Var ratio = diff::mul(num, diff::exp(diff::scale(p.log_var, -1.0)));
  const Var terms = diff::add(diff::sub(p.log_var, q.log_var), ratio);
  const double dims = double(q.mean.value().size());
  return diff::scale(diff::add(diff::sum(terms), q.mean.tape->constant(Array::scalar(-dims))), 0.5);
}

double kl_divergence(std::span<const double> qm, std::span<const double> qlv, std::span<const double> pm,
                     std::span<const double> plv) {
  if (qm.size() != pm.size() || qlv.size() != qm.size() || plv.size() != pm.size()) {
    throw std::invalid_argument("kl_divergence: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t k = 0; k < qm.size(); ++k) {
    const double d = qm[k] - pm[k];
    kl += plv[k] - qlv[k] + (std::exp(qlv[k]) + d * d) / std::exp(plv[k]) - 1.0;
  }
  return 0.5 * kl;
}

double gaussian_log_density(std::span<const double> mean, std::span<const double> log_var,
                            std::span<const double> z) {
  double lp = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    const double d = z[k] - mean[k];
    lp += -0.5 * (std::log(2.0 * std::numbers::pi) + log_var[k] + d * d / std::exp(log_var[k]));
  }
  return lp;
}

Reconstruction reconstruction_nll(const Scene& scene, const Decoded& decoded) {
  diff::Tape& tape = *decoded.log_sigma2.tape;
  const std::size_t n = scene.agents.size();
  const std::size_t T = std::size_t(scene.pred_len);
  Var sq_sum;
  for (std::size_t t = 0; t < T; ++t) {
    Array gt({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = scene.agents[i].positions[std::size_t(scene.obs_len) + t];
      gt.at(i, 0) = p.x;
      gt.at(i, 1) = p.y;
    }
    const Var sq = diff::square(diff::sub(decoded.positions[t], tape.constant(std::move(gt))));
    sq_sum = t == 0 ? sq : diff::add(sq_sum, sq);
  }
  const Var inv_var = diff::exp(diff::scale(decoded.log_sigma2, -1.0));
  const Var weighted = diff::mul(sq_sum, inv_var);
  const double count = double(n * T);
  const Var log_norm = diff::scale(diff::sum(decoded.log_sigma2), 0.5 * count);
  const double constant = count * std::log(2.0 * std::numbers::pi);
  Reconstruction r;
  r.total = diff::add(diff::add(diff::scale(diff::sum(weighted), 0.5), log_norm),
                      tape.constant(Array::scalar(constant)));

  const auto& w = weighted.value();
  const auto& ls = decoded.log_sigma2.value();
  const double per_row_const = double(T) * (std::log(2.0 * std::numbers::pi) + 0.5 * (ls[0] + ls[1]));
  for (std::size_t i = 0; i < n; ++i) r.per_agent.push_back(0.5 * (w.at(i, 0) + w.at(i, 1)) + per_row_const);
  return r;
}

}  // namespace jvae::model
