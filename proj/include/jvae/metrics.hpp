#pragma once

// Best-of-N displacement errors and kernel-density negative log-likelihood.

#include "jvae/prediction.hpp"
#include "jvae/scene.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace jvae::metrics {

// Minimum over samples of the Euclidean error at `step`.
double fde_best_of_n(std::span<const Trajectory> samples, const Trajectory& gt, std::size_t step);

// Minimum over samples of the mean Euclidean error over steps 0..step.
double ade_best_of_n(std::span<const Trajectory> samples, const Trajectory& gt, std::size_t step);

struct KdeBandwidth {
  Eigen::Matrix2d matrix;
  bool fallback = false;
};

inline constexpr double kKdeRegularizer = 1e-6;
inline constexpr double kKdeFallbackBandwidth = 1e-3;  // m

// Scott's rule, H = N^(-1/3) (Σ̂ + 1e-6 I) with Σ̂ the unbiased sample
// covariance. Identical or degenerate point sets use an isotropic 1e-3 m
// bandwidth instead.
KdeBandwidth scott_bandwidth(std::span<const Vec2> points);

// log of the Gaussian-kernel mixture density at `query`.
double kde_log_density(std::span<const Vec2> points, Vec2 query);

// NLL of gt[step] under a KDE of the sample positions at `step`. N >= 2.
double kde_nll(std::span<const Trajectory> samples, const Trajectory& gt, std::size_t step);

// Mean of kde_nll over steps 0..step.
double kde_nll_through(std::span<const Trajectory> samples, const Trajectory& gt, std::size_t step);

// Zero-based future index for a horizon in seconds; throws
// std::invalid_argument when horizon/dt is not a positive integer.
std::size_t horizon_step(double horizon_s, double dt);

struct AgentRecord {
  std::string scene_id;
  int agent_id = 0;
  AgentKind kind = AgentKind::pedestrian;
  double closest_approach = 0.0;
  std::vector<double> fde;  // per horizon
  std::vector<double> ade;
  std::vector<double> kde_nll;
};

struct HorizonMetrics {
  double horizon_s = 0.0;
  double fde = 0.0;
  double ade = 0.0;
  double kde_nll = 0.0;
};

struct MetricReport {
  std::string variant;
  bool interactions_flag = false;
  std::size_t n_samples = 0;
  std::size_t agent_count = 0;
  std::vector<HorizonMetrics> horizons;
  std::vector<AgentRecord> agents;
};

struct EvalOptions {
  std::vector<double> horizons_s = {1.0, 2.0, 3.0};
  std::string variant = "unknown";
  bool interactions_flag = false;
};

// Per-agent records for every non-ego agent.
std::vector<AgentRecord> score_prediction(const PredictionSet& pred, const EvalOptions& opts);

// Split-level report: every metric averaged over agents.
MetricReport evaluate(std::span<const PredictionSet> preds, const EvalOptions& opts);
MetricReport aggregate(std::vector<AgentRecord> records, const EvalOptions& opts, std::size_t n_samples);

void write_report_table(std::ostream& out, const MetricReport& report);
void write_report_csv_header(std::ostream& out);
void write_report_csv_rows(std::ostream& out, const MetricReport& report);

}  // namespace jvae::metrics
