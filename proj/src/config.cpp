#include "jvae/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace jvae::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + ": expected " +
                    expected);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, std::is_integral_v<T> ? "an integer" : "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "true or false");
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(15);
  s << v;
  return s.str();
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Entry number(std::string key, Access access) {
  return {key,
          [key, access](RunConfig& c, std::string_view v) { access(c) = parse_number<T>(key, v); },
          [access](const RunConfig& c) {
            const T value = access(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) return format_double(value);
            else return std::to_string(value);
          }};
}

template <typename Access>
Entry flag(std::string key, Access access) {
  return {key, [key, access](RunConfig& c, std::string_view v) { access(c) = parse_bool(key, v); },
          [access](const RunConfig& c) -> std::string {
            return access(const_cast<RunConfig&>(c)) ? "true" : "false";
          }};
}

template <typename Access>
Entry text(std::string key, Access access) {
  return {key, [access](RunConfig& c, std::string_view v) { access(c) = std::string(v); },
          [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)); }};
}

template <typename Parse, typename Print, typename Access>
Entry choice(std::string key, Parse parse, Print print, Access access, const char* expected) {
  return {key,
          [key, parse, access, expected](RunConfig& c, std::string_view v) {
            try {
              access(c) = parse(v);
            } catch (const std::exception&) {
              bad_value(key, v, expected);
            }
          },
          [print, access](const RunConfig& c) { return std::string(print(access(const_cast<RunConfig&>(c)))); }};
}

std::vector<double> parse_list(std::string_view key, std::string_view value) {
  std::vector<double> out;
  std::string item;
  std::istringstream in{std::string(value)};
  while (std::getline(in, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  if (out.empty()) bad_value(key, value, "a comma-separated list of numbers");
  return out;
}

const std::vector<Entry>& table() {
  using synth::InteractionMode;
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back(number<std::uint64_t>("gen.seed", [](RunConfig& c) -> auto& { return c.gen.seed; }));
    e.push_back(number<int>("gen.n_scenes", [](RunConfig& c) -> auto& { return c.gen.n_scenes; }));
    e.push_back(number<int>("gen.agents_min", [](RunConfig& c) -> auto& { return c.gen.agents_min; }));
    e.push_back(number<int>("gen.agents_max", [](RunConfig& c) -> auto& { return c.gen.agents_max; }));
    e.push_back(choice(
        "gen.interaction_mode", [](std::string_view v) { return synth::parse_interaction_mode(v); },
        [](InteractionMode m) { return synth::to_string(m); },
        [](RunConfig& c) -> auto& { return c.gen.interaction_mode; }, "dense or sparse"));
    e.push_back(number<double>("gen.yield_prob", [](RunConfig& c) -> auto& { return c.gen.yield_prob; }));
    e.push_back(number<double>("gen.continue_prob", [](RunConfig& c) -> auto& { return c.gen.continue_prob; }));
    e.push_back(number<double>("gen.decision_noise", [](RunConfig& c) -> auto& { return c.gen.decision_noise; }));
    e.push_back(number<double>("gen.ego_speed", [](RunConfig& c) -> auto& { return c.gen.ego_speed; }));
    e.push_back(number<double>("gen.ped_speed", [](RunConfig& c) -> auto& { return c.gen.ped_speed; }));
    e.push_back(number<double>("gen.bicyclist_prob", [](RunConfig& c) -> auto& { return c.gen.bicyclist_prob; }));
    e.push_back(number<double>("gen.bicyclist_speed_factor",
                               [](RunConfig& c) -> auto& { return c.gen.bicyclist_speed_factor; }));
    e.push_back(number<double>("gen.val_fraction", [](RunConfig& c) -> auto& { return c.gen.val_fraction; }));
    e.push_back(number<double>("gen.test_fraction", [](RunConfig& c) -> auto& { return c.gen.test_fraction; }));
    e.push_back(number<double>("gen.dt", [](RunConfig& c) -> auto& { return c.gen.dt; }));
    e.push_back(number<int>("gen.obs_len", [](RunConfig& c) -> auto& { return c.gen.obs_len; }));
    e.push_back(number<int>("gen.pred_len", [](RunConfig& c) -> auto& { return c.gen.pred_len; }));

    e.push_back(number<double>("train.beta", [](RunConfig& c) -> auto& { return c.train.beta; }));
    e.push_back(number<double>("train.lr", [](RunConfig& c) -> auto& { return c.train.lr; }));
    e.push_back(number<double>("train.lr_decay", [](RunConfig& c) -> auto& { return c.train.lr_decay; }));
    e.push_back(number<int>("train.steps", [](RunConfig& c) -> auto& { return c.train.steps; }));
    e.push_back(number<int>("train.batch_scenes", [](RunConfig& c) -> auto& { return c.train.batch_scenes; }));
    e.push_back(number<std::uint64_t>("train.seed", [](RunConfig& c) -> auto& { return c.train.seed; }));
    e.push_back(choice(
        "train.variant", [](std::string_view v) { return model::parse_variant(v); },
        [](model::Variant v) { return model::to_string(v); }, [](RunConfig& c) -> auto& { return c.train.variant; },
        "cvae, beta_cvae or joint_beta_cvae"));
    e.push_back(flag("train.ego_conditioning", [](RunConfig& c) -> auto& { return c.train.hyper.ego_conditioning; }));
    e.push_back(number<std::size_t>("train.hidden", [](RunConfig& c) -> auto& { return c.train.hyper.hidden; }));
    e.push_back(number<std::size_t>("train.latent", [](RunConfig& c) -> auto& { return c.train.hyper.latent; }));
    e.push_back(
        number<std::size_t>("train.attn_hidden", [](RunConfig& c) -> auto& { return c.train.hyper.attn_hidden; }));
    e.push_back(
        number<std::size_t>("train.value_dim", [](RunConfig& c) -> auto& { return c.train.hyper.value_dim; }));
    e.push_back(number<double>("train.clip_norm", [](RunConfig& c) -> auto& { return c.train.clip_norm; }));
    e.push_back(number<double>("train.divergence_loss", [](RunConfig& c) -> auto& { return c.train.divergence_loss; }));
    e.push_back(number<int>("train.eval_every", [](RunConfig& c) -> auto& { return c.train.eval_every; }));
    e.push_back(number<int>("train.eval_samples", [](RunConfig& c) -> auto& { return c.train.eval_samples; }));
    e.push_back(number<double>("train.eval_horizon", [](RunConfig& c) -> auto& { return c.train.eval_horizon_s; }));
    e.push_back(number<int>("train.eval_scenes", [](RunConfig& c) -> auto& { return c.train.eval_scenes; }));

    e.push_back(number<int>("eval.n_samples", [](RunConfig& c) -> auto& { return c.eval.n_samples; }));
    e.push_back({"eval.horizons",
                 [](RunConfig& c, std::string_view v) { c.eval.horizons_s = parse_list("eval.horizons", v); },
                 [](const RunConfig& c) {
                   std::string s;
                   for (double h : c.eval.horizons_s) s += (s.empty() ? "" : ",") + format_double(h);
                   return s;
                 }});
    e.push_back(number<std::uint64_t>("eval.seed", [](RunConfig& c) -> auto& { return c.eval.seed; }));
    e.push_back(choice(
        "eval.split", [](std::string_view v) { return parse_split(v); }, [](Split s) { return to_string(s); },
        [](RunConfig& c) -> auto& { return c.eval.split; }, "train, val or test"));
    e.push_back(number<int>("eval.orderings", [](RunConfig& c) -> auto& { return c.eval.orderings; }));
    e.push_back(number<int>("eval.order_scenes", [](RunConfig& c) -> auto& { return c.eval.order_scenes; }));

    e.push_back(text("paths.scenes", [](RunConfig& c) -> auto& { return c.paths.scenes; }));
    e.push_back(text("paths.checkpoint", [](RunConfig& c) -> auto& { return c.paths.checkpoint; }));
    e.push_back(text("paths.predictions", [](RunConfig& c) -> auto& { return c.paths.predictions; }));

    e.push_back(number<int>("reproduce.seeds", [](RunConfig& c) -> auto& { return c.reproduce.seeds; }));
    e.push_back(flag("reproduce.sparse_independent",
                     [](RunConfig& c) -> auto& { return c.reproduce.sparse_independent; }));
    return e;
  }();
  return entries;
}

}  // namespace

void set(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& e : table()) {
    if (e.key == key) {
      e.set(config, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply(RunConfig& config, std::istream& in) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(config, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  config::apply(config, in);
}

std::string echo(const RunConfig& config) {
  std::string out;
  for (const auto& e : table()) out += e.key + " = " + e.get(config) + "\n";
  return out;
}

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const auto& e : table()) out.push_back(e.key);
  return out;
}

void validate(const RunConfig& c) {
  try {
    synth::validate(c.gen);
    train::validate(c.train);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.eval.n_samples <= 0) throw ConfigError("eval.n_samples must be positive");
  if (c.eval.orderings < 0 || c.eval.order_scenes < 0) throw ConfigError("eval order settings must be non-negative");
  if (c.reproduce.seeds <= 0) throw ConfigError("reproduce.seeds must be positive");
  for (double h : c.eval.horizons_s) {
    const double ratio = h / c.gen.dt;
    if (!(h > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9) {
      throw ConfigError("horizon " + format_double(h) + " s is not a multiple of dt " + format_double(c.gen.dt));
    }
    if (std::round(ratio) > c.gen.pred_len) {
      throw ConfigError("horizon " + format_double(h) + " s exceeds the prediction length");
    }
  }
  if (std::abs(c.train.eval_horizon_s / c.gen.dt - std::round(c.train.eval_horizon_s / c.gen.dt)) > 1e-9 ||
      std::round(c.train.eval_horizon_s / c.gen.dt) > c.gen.pred_len) {
    throw ConfigError("validation horizon does not fit the prediction grid");
  }
}

void apply_smoke(RunConfig& c) {
  c.gen.n_scenes = 30;
  c.gen.val_fraction = 0.2;
  c.gen.test_fraction = 0.2;
  c.train.steps = 16;
  c.train.batch_scenes = 2;
  c.train.hyper.hidden = 16;
  c.train.hyper.latent = 4;
  c.train.hyper.attn_hidden = 8;
  c.train.hyper.value_dim = 8;
  c.train.eval_every = 8;
  c.train.eval_samples = 5;
  c.eval.n_samples = 5;
  c.eval.orderings = 2;
  c.eval.order_scenes = 3;
  c.reproduce.seeds = 1;
}

void apply_seed(RunConfig& c, std::uint64_t seed) {
  c.gen.seed = seed;
  c.train.seed = seed;
  c.eval.seed = seed;
}

}  // namespace jvae::config
