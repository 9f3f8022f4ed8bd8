#include "jvae/pipeline.hpp"

#include "jvae/inference.hpp"
#include "jvae/prediction.hpp"
#include "jvae/synth.hpp"
#include "jvae/train.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace jvae::pipeline {

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

void echo_config(const config::RunConfig& config, const fs::path& out) {
  ensure_dir(out);
  open_out(out / kConfigEcho) << config::echo(config);
}

fs::path input(const std::string& configured, const fs::path& out, const char* default_name) {
  const fs::path p = configured.empty() ? out / default_name : fs::path(configured);
  if (!fs::exists(p)) throw DataError("missing input file " + p.string());
  return p;
}

// Wall-clock times live in their own log so every other output stays
// byte-identical across runs.
class Timer {
 public:
  Timer(fs::path out, std::string what) : out_(std::move(out)), what_(std::move(what)) {}
  ~Timer() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream log(out_ / kTimingLog, std::ios::app);
    if (log) log << what_ << ' ' << std::fixed << std::setprecision(2) << s << " s\n";
  }

 private:
  fs::path out_;
  std::string what_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<Scene> all_scenes(const SplitDataset& data) {
  std::vector<Scene> out = data.train;
  out.insert(out.end(), data.val.begin(), data.val.end());
  out.insert(out.end(), data.test.begin(), data.test.end());
  return out;
}

CorpusSummary write_stats(std::span<const Scene> scenes, const fs::path& dir, const std::string& corpus) {
  const auto cdf = analysis::closest_approach_cdf(scenes);
  const auto accel = analysis::accel_vs_distance(scenes, analysis::default_bin_edges());
  const auto tags = analysis::tag_interactions(scenes);
  {
    auto f = open_out(dir / "closest_approach_cdf.csv");
    analysis::write_cdf_csv(f, cdf);
  }
  {
    auto f = open_out(dir / "accel_vs_distance.csv");
    analysis::write_curve_csv(f, accel);
  }
  CorpusSummary s;
  s.corpus = corpus;
  s.cdf_at_10 = analysis::cdf_at(cdf, 10.0);
  s.cdf_at_20 = analysis::cdf_at(cdf, 20.0);
  if (const auto peak = analysis::peak_bin(accel)) s.accel_peak = accel[*peak];
  {
    auto f = open_out(dir / "interaction_tags.csv");
    f << std::setprecision(10) << "scene_id,agent_id,interacting,closest_approach,max_accel_near\n";
    std::size_t interacting = 0;
    for (const auto& t : tags) {
      f << t.scene_id << ',' << t.agent_id << ',' << (t.interacting ? 1 : 0) << ',' << t.closest_approach << ','
        << t.max_accel_near << '\n';
      interacting += t.interacting ? 1 : 0;
    }
    s.interacting_fraction = tags.empty() ? 0.0 : double(interacting) / double(tags.size());
  }
  auto f = open_out(dir / "stats.txt");
  f << std::fixed << std::setprecision(3);
  f << "agents: " << tags.size() << '\n';
  f << "closest-approach CDF at 10 m: " << s.cdf_at_10 << '\n';
  f << "closest-approach CDF at 20 m: " << s.cdf_at_20 << '\n';
  f << "interacting fraction: " << s.interacting_fraction << '\n';
  if (s.accel_peak) {
    f << "max-acceleration peak bin: [" << s.accel_peak->low << ", " << s.accel_peak->high
      << ") m, value " << *s.accel_peak->value << " m/s^2\n";
  }
  return s;
}

void write_records_csv(std::ostream& out, const metrics::MetricReport& report, const std::vector<double>& horizons) {
  out << std::setprecision(10) << "scene_id,agent_id,kind,closest_approach";
  for (double h : horizons) out << ",fde_" << h << "s,ade_" << h << "s,kde_nll_" << h << 's';
  out << '\n';
  for (const auto& r : report.agents) {
    out << r.scene_id << ',' << r.agent_id << ',' << to_string(r.kind) << ',' << r.closest_approach;
    for (std::size_t h = 0; h < horizons.size(); ++h) out << ',' << r.fde[h] << ',' << r.ade[h] << ',' << r.kde_nll[h];
    out << '\n';
  }
}

metrics::EvalOptions eval_options(const config::RunConfig& config, model::Variant variant, bool ego) {
  metrics::EvalOptions o;
  o.horizons_s = config.eval.horizons_s;
  o.variant = std::string(model::to_string(variant));
  o.interactions_flag = ego;
  return o;
}

std::string row_name(model::Variant v, bool ego) {
  return std::string(model::to_string(v)) + (ego ? "" : "_no_ego");
}

}  // namespace

void cmd_generate(const config::RunConfig& config, const fs::path& out) {
  echo_config(config, out);
  Timer timer(out, "generate");
  const auto gen = synth::generate(config.gen);
  save_scenes(out / kScenesFile, gen.data);
  save_decisions(out / kDecisionsFile, gen.decisions);
}

void cmd_train(const config::RunConfig& config, const fs::path& out) {
  echo_config(config, out);
  Timer timer(out, "train");
  const SplitDataset data = load_scenes(input(config.paths.scenes, out, kScenesFile));
  if (data.train.empty()) throw DataError("no training scenes in the input file");
  train::TrainResult result;
  try {
    result = train::train(data, config.train);
  } catch (const train::NumericalError& e) {
    if (e.last_good) model::save_checkpoint(out / kLastGoodFile, *e.last_good);
    throw;
  }
  model::save_checkpoint(out / kCheckpointFile, result.model);
  {
    auto f = open_out(out / kTrainLogFile);
    train::write_log_csv(f, result.log);
  }
  auto f = open_out(out / kValLogFile);
  train::write_eval_csv(f, result.log);
}

void cmd_predict(const config::RunConfig& config, const fs::path& out) {
  echo_config(config, out);
  Timer timer(out, "predict");
  const SplitDataset data = load_scenes(input(config.paths.scenes, out, kScenesFile));
  const model::Model model = model::load_checkpoint(input(config.paths.checkpoint, out, kCheckpointFile));
  const auto& scenes = data.of(config.eval.split);
  if (scenes.empty()) throw DataError("no scenes in the " + std::string(to_string(config.eval.split)) + " split");
  const auto preds =
      inference::predict_all(scenes, model, std::size_t(config.eval.n_samples), config.eval.seed);
  save_predictions(out / kPredictionsFile, preds);

  if (config.eval.orderings > 0) {
    auto f = open_out(out / "order_sensitivity.csv");
    f << std::setprecision(10) << "scene_id,agents,mean_shift\n";
    int probed = 0;
    for (const Scene& s : scenes) {
      if (probed >= config.eval.order_scenes) break;
      if (s.agents.size() < 3) continue;
      const auto r = inference::order_sensitivity(s, model, std::size_t(config.eval.n_samples), config.eval.seed,
                                                  std::size_t(config.eval.orderings));
      f << s.scene_id << ',' << s.agents.size() << ',' << r.mean_shift << '\n';
      ++probed;
    }
  }
}

void cmd_evaluate(const config::RunConfig& config, const fs::path& out) {
  echo_config(config, out);
  Timer timer(out, "evaluate");
  const auto preds = load_predictions(input(config.paths.predictions, out, kPredictionsFile));
  if (preds.empty()) throw DataError("prediction file holds no scenes");
  const auto opts = eval_options(config, config.train.variant, config.train.hyper.ego_conditioning);
  const auto report = metrics::evaluate(preds, opts);
  {
    auto f = open_out(out / "report.txt");
    metrics::write_report_table(f, report);
  }
  {
    auto f = open_out(out / "report.csv");
    metrics::write_report_csv_header(f);
    metrics::write_report_csv_rows(f, report);
  }
  {
    auto f = open_out(out / "agent_records.csv");
    write_records_csv(f, report, opts.horizons_s);
  }
  auto f = open_out(out / "error_vs_proximity.csv");
  analysis::write_curve_csv(f, analysis::error_vs_proximity(report.agents, analysis::default_bin_edges(),
                                                            opts.horizons_s.size() - 1));
}

void cmd_stats(const config::RunConfig& config, const fs::path& out) {
  echo_config(config, out);
  Timer timer(out, "stats");
  const SplitDataset data = load_scenes(input(config.paths.scenes, out, kScenesFile));
  const auto scenes = all_scenes(data);
  write_stats(scenes, out, "corpus");
}

const AblationRow& ReproduceResult::row(std::string_view corpus, model::Variant v, bool pv) const {
  for (const auto& r : rows) {
    if (r.corpus == corpus && r.variant == v && r.pv == pv) return r;
  }
  throw std::out_of_range("no ablation row for " + std::string(corpus) + "/" + std::string(model::to_string(v)));
}

ReproduceResult cmd_reproduce(const config::RunConfig& config, const fs::path& out) {
  echo_config(config, out);
  Timer timer(out, "reproduce");
  ReproduceResult result;
  result.horizons_s = config.eval.horizons_s;
  const std::size_t last = config.eval.horizons_s.size() - 1;

  for (const auto mode : {synth::InteractionMode::dense, synth::InteractionMode::sparse}) {
    const std::string corpus(synth::to_string(mode));
    const fs::path dir = out / corpus;
    ensure_dir(dir);
    synth::GenConfig gen = config.gen;
    gen.interaction_mode = mode;
    const auto generated = synth::generate(gen);
    save_scenes(dir / kScenesFile, generated.data);
    save_decisions(dir / kDecisionsFile, generated.decisions);
    const auto scenes = all_scenes(generated.data);
    result.corpora.push_back(write_stats(scenes, dir, corpus));
    const auto& test = generated.data.test;
    if (test.empty() || generated.data.train.empty()) throw DataError(corpus + " corpus has an empty split");

    struct Spec {
      model::Variant variant;
      bool ego;
    };
    std::vector<Spec> specs;
    if (mode == synth::InteractionMode::dense || config.reproduce.sparse_independent) {
      specs.push_back({model::Variant::cvae, true});
      specs.push_back({model::Variant::beta_cvae, true});
    }
    specs.push_back({model::Variant::joint_beta_cvae, true});
    specs.push_back({model::Variant::joint_beta_cvae, false});

    for (const Spec& spec : specs) {
      const std::string name = row_name(spec.variant, spec.ego);
      AblationRow row;
      row.corpus = corpus;
      row.variant = spec.variant;
      row.pp = spec.variant == model::Variant::joint_beta_cvae;
      row.pv = spec.ego && row.pp;
      row.fde.assign(result.horizons_s.size(), 0.0);
      row.ade = row.fde;
      row.kde_nll = row.fde;
      std::vector<metrics::AgentRecord> pooled;
      for (int k = 0; k < config.reproduce.seeds; ++k) {
        const fs::path run_dir = dir / name / ("seed" + std::to_string(k));
        ensure_dir(run_dir);
        train::TrainConfig tc = config.train;
        tc.variant = spec.variant;
        tc.hyper.ego_conditioning = spec.ego;
        tc.seed = config.train.seed + std::uint64_t(k);
        const auto trained = train::train(generated.data, tc);
        model::save_checkpoint(run_dir / kCheckpointFile, trained.model);
        {
          auto f = open_out(run_dir / kTrainLogFile);
          train::write_log_csv(f, trained.log);
        }
        const auto preds =
            inference::predict_all(test, trained.model, std::size_t(config.eval.n_samples), config.eval.seed);
        const auto report = metrics::evaluate(preds, eval_options(config, spec.variant, spec.ego));
        {
          auto f = open_out(run_dir / "report.csv");
          metrics::write_report_csv_header(f);
          metrics::write_report_csv_rows(f, report);
        }
        for (std::size_t h = 0; h < result.horizons_s.size(); ++h) {
          row.fde[h] += report.horizons[h].fde / config.reproduce.seeds;
          row.ade[h] += report.horizons[h].ade / config.reproduce.seeds;
          row.kde_nll[h] += report.horizons[h].kde_nll / config.reproduce.seeds;
        }
        row.fde_per_seed.push_back(report.horizons[last].fde);
        pooled.insert(pooled.end(), report.agents.begin(), report.agents.end());
      }
      row.proximity = analysis::error_vs_proximity(pooled, analysis::default_bin_edges(), last);
      {
        auto f = open_out(dir / ("error_vs_proximity_" + name + ".csv"));
        analysis::write_curve_csv(f, row.proximity);
      }
      result.rows.push_back(row);
      // Without attention the ego flag changes nothing, so the ego-off row
      // of an independent variant is the same model.
      if (!row.pp) {
        row.pv = false;
        result.rows.push_back(row);
        result.rows[result.rows.size() - 2].pv = true;
      }
    }
  }

  {
    auto f = open_out(out / "ablation.txt");
    write_ablation_table(f, result);
  }
  auto f = open_out(out / "ablation.csv");
  write_ablation_csv(f, result);
  return result;
}

void write_ablation_table(std::ostream& out, const ReproduceResult& result) {
  out << std::left << std::setw(8) << "corpus" << std::setw(17) << "method" << std::setw(4) << "P-P" << std::setw(4)
      << "P-V" << std::right;
  for (double h : result.horizons_s) {
    std::ostringstream label;
    label << "fde@" << h << "s";
    out << std::setw(10) << label.str();
  }
  for (double h : result.horizons_s) {
    std::ostringstream label;
    label << "nll@" << h << "s";
    out << std::setw(10) << label.str();
  }
  out << '\n' << std::fixed << std::setprecision(3);
  for (const auto& r : result.rows) {
    out << std::left << std::setw(8) << r.corpus << std::setw(17) << model::to_string(r.variant) << std::setw(4)
        << (r.pp ? "x" : "-") << std::setw(4) << (r.pv ? "x" : "-") << std::right;
    for (double v : r.fde) out << std::setw(10) << v;
    for (double v : r.kde_nll) out << std::setw(10) << v;
    out << '\n';
  }
  out << std::defaultfloat;
}

void write_ablation_csv(std::ostream& out, const ReproduceResult& result) {
  const auto old = out.precision(10);
  out << "corpus,variant,pp,pv,horizon,fde,ade,kde_nll\n";
  for (const auto& r : result.rows) {
    for (std::size_t h = 0; h < result.horizons_s.size(); ++h) {
      out << r.corpus << ',' << model::to_string(r.variant) << ',' << (r.pp ? 1 : 0) << ',' << (r.pv ? 1 : 0) << ','
          << result.horizons_s[h] << ',' << r.fde[h] << ',' << r.ade[h] << ',' << r.kde_nll[h] << '\n';
    }
  }
  out.precision(old);
}

}  // namespace jvae::pipeline
