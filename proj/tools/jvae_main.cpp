// jvae command-line entry point.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure.
// Failures print one line on stderr: `jvae: error=<kind> code=<n> <message>`.

#include "jvae/config.hpp"
#include "jvae/pipeline.hpp"
#include "jvae/train.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

struct Flags {
  std::string config_path;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  bool smoke = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config_path, "Config file (key = value lines)");
  cmd->add_option("--out", flags.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", flags.seed, "Seed for generation, training and evaluation");
  cmd->add_flag("--smoke", flags.smoke, "Tiny sizes for a quick end-to-end run");
  cmd->add_option("--set", flags.overrides, "Override one key, e.g. --set train.steps=100");
}

jvae::config::RunConfig build_config(const Flags& flags) {
  using namespace jvae::config;
  RunConfig c;
  if (!flags.config_path.empty()) apply_file(c, flags.config_path);
  if (flags.smoke) apply_smoke(c);
  if (flags.seed) apply_seed(c, *flags.seed);
  for (const auto& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  validate(c);
  return c;
}

int fail(const char* kind, int code, const std::string& message) {
  std::string one_line = message;
  for (char& ch : one_line) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  std::cerr << "jvae: error=" << kind << " code=" << code << ' ' << one_line << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint latent-variable trajectory forecasting on synthetic ego/pedestrian scenes"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"generate", "Generate a synthetic scene corpus and its decision sidecar"},
      {"train", "Train a model on a scene corpus"},
      {"predict", "Sample joint futures for one split"},
      {"evaluate", "Score predictions: Best-of-N FDE/ADE and KDE NLL"},
      {"stats", "Corpus interaction diagnostics"},
      {"reproduce", "Dense and sparse corpora, every ablation, one table"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("config", 2, e.what());
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const auto config = build_config(flags);
    const std::filesystem::path out = flags.out;
    namespace p = jvae::pipeline;
    if (cmd == "generate") p::cmd_generate(config, out);
    else if (cmd == "train") p::cmd_train(config, out);
    else if (cmd == "predict") p::cmd_predict(config, out);
    else if (cmd == "evaluate") {
      p::cmd_evaluate(config, out);
      std::ifstream report(out / "report.txt");
      std::cout << report.rdbuf();
    } else if (cmd == "stats") {
      p::cmd_stats(config, out);
      std::ifstream stats(out / "stats.txt");
      std::cout << stats.rdbuf();
    } else {
      p::cmd_reproduce(config, out);
      std::ifstream table(out / "ablation.txt");
      std::cout << table.rdbuf();
    }
  } catch (const jvae::config::ConfigError& e) {
    return fail("config", 2, e.what());
  } catch (const std::invalid_argument& e) {
    return fail("config", 2, e.what());
  } catch (const jvae::train::NumericalError& e) {
    return fail("numerical", 4, e.what());
  } catch (const jvae::DataError& e) {
    return fail("data", 3, e.what());
  } catch (const std::exception& e) {
    return fail("data", 3, e.what());
  }
  return 0;
}
