#include "jvae/metrics.hpp"

#include "jvae/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace jvae::metrics {

namespace {

void check_samples(std::span<const Trajectory> samples, const Trajectory& gt, std::size_t step) {
  if (samples.empty()) throw std::invalid_argument("metrics: at least one sample required");
  if (step >= gt.size()) throw std::invalid_argument("metrics: step beyond prediction length");
  for (const auto& s : samples) {
    if (s.size() != gt.size()) throw std::invalid_argument("metrics: sample length differs from ground truth");
  }
}

}  // namespace

double fde_best_of_n(std::span<const Trajectory> samples, const Trajectory& gt, std::size_t step) {
  check_samples(samples, gt, step);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) best = std::min(best, (s[step] - gt[step]).norm());
  return best;
}

double ade_best_of_n(std::span<const Trajectory> samples, const Trajectory& gt, std::size_t step) {
  check_samples(samples, gt, step);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    double total = 0.0;
    for (std::size_t t = 0; t <= step; ++t) total += (s[t] - gt[t]).norm();
    best = std::min(best, total / double(step + 1));
  }
  return best;
}

KdeBandwidth scott_bandwidth(std::span<const Vec2> points) {
  const std::size_t n = points.size();
  if (n < 2) throw std::invalid_argument("kde: at least two samples required");
  KdeBandwidth bw;
  const double fallback = kKdeFallbackBandwidth * kKdeFallbackBandwidth;
  const bool identical = std::all_of(points.begin(), points.end(), [&](Vec2 p) { return p == points[0]; });
  if (!identical) {
    Vec2 mean;
    for (Vec2 p : points) mean += p;
    mean = mean / double(n);
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (Vec2 p : points) {
      const Eigen::Vector2d d(p.x - mean.x, p.y - mean.y);
      cov += d * d.transpose();
    }
    cov /= double(n - 1);
    cov += kKdeRegularizer * Eigen::Matrix2d::Identity();
    const double factor = std::pow(double(n), -1.0 / 6.0);
    bw.matrix = factor * factor * cov;
    const double det = bw.matrix.determinant();
    if (std::isfinite(det) && det > 0.0) return bw;
  }
  bw.matrix = fallback * Eigen::Matrix2d::Identity();
  bw.fallback = true;
  return bw;
}

double kde_log_density(std::span<const Vec2> points, Vec2 query) {
  const KdeBandwidth bw = scott_bandwidth(points);
  const Eigen::Matrix2d inv = bw.matrix.inverse();
  const double log_norm = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(bw.matrix.determinant());
  std::vector<double> terms;
  terms.reserve(points.size());
  for (Vec2 p : points) {
    const Eigen::Vector2d d(query.x - p.x, query.y - p.y);
    terms.push_back(log_norm - 0.5 * d.dot(inv * d));
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc) - std::log(double(points.size()));
}

double kde_nll(std::span<const Trajectory> samples, const Trajectory& gt, std::size_t step) {
  check_samples(samples, gt, step);
  std::vector<Vec2> points;
  points.reserve(samples.size());
  for (const auto& s : samples) points.push_back(s[step]);
  return -kde_log_density(points, gt[step]);
}

double kde_nll_through(std::span<const Trajectory> samples, const Trajectory& gt, std::size_t step) {
  double total = 0.0;
  for (std::size_t t = 0; t <= step; ++t) total += kde_nll(samples, gt, t);
  return total / double(step + 1);
}

std::size_t horizon_step(double horizon_s, double dt) {
  const double ratio = horizon_s / dt;
  const double rounded = std::round(ratio);
  if (!(dt > 0.0) || rounded < 1.0 || std::abs(ratio - rounded) > 1e-9) {
    throw std::invalid_argument("horizon " + std::to_string(horizon_s) + " s is not a positive multiple of dt " +
                                std::to_string(dt));
  }
  return std::size_t(rounded) - 1;
}

std::vector<AgentRecord> score_prediction(const PredictionSet& pred, const EvalOptions& opts) {
  const Scene& scene = pred.scene;
  std::vector<std::size_t> steps;
  for (double h : opts.horizons_s) {
    const std::size_t step = horizon_step(h, scene.dt);
    if (step >= std::size_t(scene.pred_len)) {
      throw std::invalid_argument("horizon " + std::to_string(h) + " s exceeds the prediction length");
    }
    steps.push_back(step);
  }
  std::vector<AgentRecord> out;
  for (const Agent& a : scene.agents) {
    if (a.is_ego()) continue;
    const auto& samples = pred.of(a.id).samples;
    const Trajectory gt = scene.future(a);
    AgentRecord r;
    r.scene_id = scene.scene_id;
    r.agent_id = a.id;
    r.kind = a.kind;
    r.closest_approach = analysis::closest_approach(scene, a);
    for (std::size_t step : steps) {
      r.fde.push_back(fde_best_of_n(samples, gt, step));
      r.ade.push_back(ade_best_of_n(samples, gt, step));
      r.kde_nll.push_back(samples.size() >= 2 ? kde_nll_through(samples, gt, step)
                                              : std::numeric_limits<double>::quiet_NaN());
    }
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.agent_id < b.agent_id; });
  return out;
}

MetricReport aggregate(std::vector<AgentRecord> records, const EvalOptions& opts, std::size_t n_samples) {
  MetricReport report;
  report.variant = opts.variant;
  report.interactions_flag = opts.interactions_flag;
  report.n_samples = n_samples;
  report.agent_count = records.size();
  for (std::size_t h = 0; h < opts.horizons_s.size(); ++h) {
    HorizonMetrics m;
    m.horizon_s = opts.horizons_s[h];
    for (const auto& r : records) {
      m.fde += r.fde[h];
      m.ade += r.ade[h];
      m.kde_nll += r.kde_nll[h];
    }
    if (!records.empty()) {
      const double n = double(records.size());
      m.fde /= n;
      m.ade /= n;
      m.kde_nll /= n;
    }
    report.horizons.push_back(m);
  }
  report.agents = std::move(records);
  return report;
}

MetricReport evaluate(std::span<const PredictionSet> preds, const EvalOptions& opts) {
  std::vector<AgentRecord> records;
  std::size_t n_samples = 0;
  for (const auto& p : preds) {
    auto r = score_prediction(p, opts);
    records.insert(records.end(), r.begin(), r.end());
    n_samples = p.n_samples();
  }
  return aggregate(std::move(records), opts, n_samples);
}

void write_report_table(std::ostream& out, const MetricReport& report) {
  out << "variant: " << report.variant << "  interactions: " << (report.interactions_flag ? "yes" : "no")
      << "  N: " << report.n_samples << "  agents: " << report.agent_count << '\n';
  out << std::left << std::setw(10) << "horizon" << std::right << std::setw(12) << "fde (m)" << std::setw(12)
      << "ade (m)" << std::setw(14) << "kde_nll" << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& h : report.horizons) {
    std::ostringstream label;
    label << "t+" << std::defaultfloat << h.horizon_s << "s";
    out << std::left << std::setw(10) << label.str() << std::right << std::setw(12) << h.fde << std::setw(12)
        << h.ade << std::setw(14) << h.kde_nll << '\n';
  }
  out << std::defaultfloat;
}

void write_report_csv_header(std::ostream& out) {
  out << "variant,interactions_flag,horizon,fde,ade,kde_nll,n_agents\n";
}

void write_report_csv_rows(std::ostream& out, const MetricReport& report) {
  const auto old = out.precision(10);
  for (const auto& h : report.horizons) {
    out << report.variant << ',' << (report.interactions_flag ? 1 : 0) << ',' << h.horizon_s << ',' << h.fde << ','
        << h.ade << ',' << h.kde_nll << ',' << report.agent_count << '\n';
  }
  out.precision(old);
}

}  // namespace jvae::metrics
