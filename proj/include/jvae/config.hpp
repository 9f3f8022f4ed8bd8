#pragma once

// Run configuration: flat `key = value` text with dotted section prefixes
// (gen.*, train.*, eval.*, paths.*, reproduce.*). Unknown keys are errors.

#include "jvae/scene.hpp"
#include "jvae/synth.hpp"
#include "jvae/train.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace jvae::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalConfig {
  int n_samples = 20;
  std::vector<double> horizons_s = {1.0, 2.0, 3.0};
  std::uint64_t seed = 0;
  Split split = Split::test;
  // Order-sensitivity probe in cmd_predict (0 disables it).
  int orderings = 5;
  int order_scenes = 20;
};

// Inputs for downstream commands; empty means the file of that name in the
// output directory.
struct Paths {
  std::string scenes;
  std::string checkpoint;
  std::string predictions;
};

struct ReproduceConfig {
  int seeds = 3;
  // Train the independent variants on the sparse corpus too.
  bool sparse_independent = true;
};

struct RunConfig {
  synth::GenConfig gen;
  train::TrainConfig train;
  EvalConfig eval;
  Paths paths;
  ReproduceConfig reproduce;
};

// Set one key from its textual value; throws ConfigError.
void set(RunConfig& config, std::string_view key, std::string_view value);

// Applies every `key = value` line; '#' starts a comment.
void apply(RunConfig& config, std::istream& in);
void apply_file(RunConfig& config, const std::filesystem::path& path);

// Every key with its effective value, one `key = value` line each, in a
// fixed order. Feeding the output back to apply() reproduces the config.
std::string echo(const RunConfig& config);
std::vector<std::string> keys();

// Cross-field checks on top of each module's own validation.
void validate(const RunConfig& config);

// Tiny sizes for end-to-end smoke runs.
void apply_smoke(RunConfig& config);

// One seed for generation, training and evaluation.
void apply_seed(RunConfig& config, std::uint64_t seed);

}  // namespace jvae::config
