#pragma once

// Command implementations behind the CLI. Every command writes under one
// output directory and echoes its effective config there.

#include "jvae/analysis.hpp"
#include "jvae/config.hpp"
#include "jvae/metrics.hpp"
#include "jvae/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace jvae::pipeline {

namespace fs = std::filesystem;

// Output file names inside a run directory.
inline constexpr const char* kScenesFile = "scenes.jsonl";
inline constexpr const char* kDecisionsFile = "decisions.csv";
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kLastGoodFile = "model.last_good.ckpt";
inline constexpr const char* kTrainLogFile = "train_log.csv";
inline constexpr const char* kValLogFile = "val_log.csv";
inline constexpr const char* kPredictionsFile = "predictions.jsonl";
inline constexpr const char* kConfigEcho = "config.effective";
inline constexpr const char* kTimingLog = "timing.log";

void cmd_generate(const config::RunConfig& config, const fs::path& out);
void cmd_train(const config::RunConfig& config, const fs::path& out);
void cmd_predict(const config::RunConfig& config, const fs::path& out);
void cmd_evaluate(const config::RunConfig& config, const fs::path& out);
void cmd_stats(const config::RunConfig& config, const fs::path& out);

// Seed-averaged scores of one ablation row.
struct AblationRow {
  std::string corpus;
  model::Variant variant = model::Variant::cvae;
  bool pp = false;  // pedestrian-pedestrian interactions modelled
  bool pv = false;  // pedestrian-vehicle interactions modelled
  std::vector<double> fde;      // per horizon, mean over seeds
  std::vector<double> ade;
  std::vector<double> kde_nll;
  std::vector<double> fde_per_seed;  // at the last horizon
  analysis::Curve proximity;         // last-horizon FDE vs closest approach, records pooled over seeds
};

struct CorpusSummary {
  std::string corpus;
  double cdf_at_10 = 0.0;
  double cdf_at_20 = 0.0;
  std::optional<analysis::Bin> accel_peak;
  double interacting_fraction = 0.0;
};

struct ReproduceResult {
  std::vector<double> horizons_s;
  std::vector<AblationRow> rows;
  std::vector<CorpusSummary> corpora;

  [[nodiscard]] const AblationRow& row(std::string_view corpus, model::Variant v, bool pv) const;
};

// Dense and sparse corpora, every variant with and without ego
// conditioning, evaluation and the ablation table.
ReproduceResult cmd_reproduce(const config::RunConfig& config, const fs::path& out);

void write_ablation_table(std::ostream& out, const ReproduceResult& result);
void write_ablation_csv(std::ostream& out, const ReproduceResult& result);

}  // namespace jvae::pipeline
