#include "jvae/config.hpp"
#include "jvae/inference.hpp"
#include "jvae/metrics.hpp"
#include "jvae/pipeline.hpp"
#include "jvae/synth.hpp"
#include "jvae/train.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <sstream>

namespace py = pybind11;
using namespace jvae;

namespace {

using Array3 = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Trajectory> to_samples(const Array3& a) {
  if (a.ndim() != 3 || a.shape(2) != 2) throw std::invalid_argument("samples must have shape (N, T, 2)");
  const auto r = a.unchecked<3>();
  std::vector<Trajectory> out(std::size_t(a.shape(0)));
  for (py::ssize_t k = 0; k < a.shape(0); ++k) {
    for (py::ssize_t t = 0; t < a.shape(1); ++t) out[std::size_t(k)].push_back({r(k, t, 0), r(k, t, 1)});
  }
  return out;
}

Trajectory to_traj(const Array3& a) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw std::invalid_argument("ground truth must have shape (T, 2)");
  Trajectory out;
  for (py::ssize_t t = 0; t < a.shape(0); ++t) out.push_back({a.at(t, 0), a.at(t, 1)});
  return out;
}

py::array_t<double> samples_array(const AgentPrediction& p) {
  const auto n = py::ssize_t(p.samples.size());
  const auto len = n ? py::ssize_t(p.samples.front().size()) : 0;
  py::array_t<double> out({n, len, py::ssize_t(2)});
  auto w = out.mutable_unchecked<3>();
  for (py::ssize_t k = 0; k < n; ++k) {
    for (py::ssize_t t = 0; t < len; ++t) {
      w(k, t, 0) = p.samples[std::size_t(k)][std::size_t(t)].x;
      w(k, t, 1) = p.samples[std::size_t(k)][std::size_t(t)].y;
    }
  }
  return out;
}

config::RunConfig make_config(const std::map<std::string, std::string>& overrides, bool smoke,
                              std::optional<std::uint64_t> seed, const std::string& config_path) {
  config::RunConfig c;
  if (!config_path.empty()) config::apply_file(c, config_path);
  if (smoke) config::apply_smoke(c);
  if (seed) config::apply_seed(c, *seed);
  for (const auto& [k, v] : overrides) config::set(c, k, v);
  config::validate(c);
  return c;
}

}  // namespace

PYBIND11_MODULE(_jvae, m) {
  m.doc() = "Joint latent-variable trajectory forecasting on synthetic ego/pedestrian scenes";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<config::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<train::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def(
      "generate",
      [](int n_scenes, std::uint64_t seed, const std::string& mode) {
        synth::GenConfig c;
        c.n_scenes = n_scenes;
        c.seed = seed;
        c.interaction_mode = synth::parse_interaction_mode(mode);
        std::ostringstream out;
        write_scenes(out, synth::generate(c).data);
        return out.str();
      },
      py::arg("n_scenes") = 100, py::arg("seed") = 1, py::arg("mode") = "dense",
      "Synthetic corpus as JSON lines, one scene per line.");

  py::class_<model::Model>(m, "Model")
      .def_static(
          "build",
          [](const std::string& variant, std::size_t hidden, std::size_t latent, bool ego_conditioning,
             std::uint64_t seed) {
            model::Hyper h;
            h.hidden = hidden;
            h.latent = latent;
            h.ego_conditioning = ego_conditioning;
            h.init_seed = seed;
            return model::build_variant(model::parse_variant(variant), h);
          },
          py::arg("variant") = "joint", py::arg("hidden") = 128, py::arg("latent") = 32,
          py::arg("ego_conditioning") = true, py::arg("seed") = 0)
      .def_static("load", [](const std::string& path) { return model::load_checkpoint(path); })
      .def("save", [](const model::Model& mdl, const std::string& path) { model::save_checkpoint(path, mdl); })
      .def_property_readonly("variant", [](const model::Model& mdl) { return std::string(model::to_string(mdl.hyper.variant)); })
      .def_property_readonly("parameter_count", [](const model::Model& mdl) { return mdl.params.scalar_count(); });

  m.def(
      "train",
      [](const std::string& scenes_jsonl, const std::map<std::string, std::string>& overrides) {
        config::RunConfig c;
        for (const auto& [k, v] : overrides) config::set(c, k, v);
        config::validate(c);
        std::istringstream in(scenes_jsonl);
        const auto data = read_scenes(in);
        py::gil_scoped_release release;
        auto r = train::train(data, c.train);
        return std::make_pair(std::move(r.model), r.log.steps.size());
      },
      py::arg("scenes"), py::arg("overrides") = std::map<std::string, std::string>{},
      "Train on a JSON-lines corpus; overrides use the train.* config keys. Returns (model, steps).");

  m.def(
      "predict",
      [](const std::string& scene_line, const model::Model& mdl, std::size_t n_samples, std::uint64_t seed) {
        const Scene s = parse_scene_line(scene_line);
        const auto p = inference::predict(s, mdl, n_samples, seed);
        py::dict out;
        for (const auto& a : p.agents) out[py::int_(a.agent_id)] = samples_array(a);
        return out;
      },
      py::arg("scene"), py::arg("model"), py::arg("n_samples") = 20, py::arg("seed") = 0,
      "Samples per agent id as arrays of shape (N, pred_len, 2).");

  m.def(
      "fde_best_of_n",
      [](const Array3& s, const Array3& gt, std::size_t step) {
        return metrics::fde_best_of_n(to_samples(s), to_traj(gt), step);
      },
      py::arg("samples"), py::arg("gt"), py::arg("step"));
  m.def(
      "ade_best_of_n",
      [](const Array3& s, const Array3& gt, std::size_t step) {
        return metrics::ade_best_of_n(to_samples(s), to_traj(gt), step);
      },
      py::arg("samples"), py::arg("gt"), py::arg("step"));
  m.def(
      "kde_nll",
      [](const Array3& s, const Array3& gt, std::size_t step) {
        return metrics::kde_nll(to_samples(s), to_traj(gt), step);
      },
      py::arg("samples"), py::arg("gt"), py::arg("step"));
  m.def(
      "kl_divergence",
      [](const std::vector<double>& qm, const std::vector<double>& qlv, const std::vector<double>& pm,
         const std::vector<double>& plv) { return model::kl_divergence(qm, qlv, pm, plv); },
      py::arg("q_mean"), py::arg("q_log_var"), py::arg("p_mean"), py::arg("p_log_var"));

  m.def(
      "effective_config",
      [](const std::map<std::string, std::string>& overrides, bool smoke, std::optional<std::uint64_t> seed,
         const std::string& config_path) { return config::echo(make_config(overrides, smoke, seed, config_path)); },
      py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("smoke") = false,
      py::arg("seed") = py::none(), py::arg("config") = "");

  m.def(
      "run",
      [](const std::string& command, const std::string& out, const std::map<std::string, std::string>& overrides,
         bool smoke, std::optional<std::uint64_t> seed, const std::string& config_path) {
        const auto c = make_config(overrides, smoke, seed, config_path);
        py::gil_scoped_release release;
        if (command == "generate") pipeline::cmd_generate(c, out);
        else if (command == "train") pipeline::cmd_train(c, out);
        else if (command == "predict") pipeline::cmd_predict(c, out);
        else if (command == "evaluate") pipeline::cmd_evaluate(c, out);
        else if (command == "stats") pipeline::cmd_stats(c, out);
        else if (command == "reproduce") pipeline::cmd_reproduce(c, out);
        else throw std::invalid_argument("unknown command '" + command + "'");
      },
      py::arg("command"), py::arg("out"), py::arg("overrides") = std::map<std::string, std::string>{},
      py::arg("smoke") = false, py::arg("seed") = py::none(), py::arg("config") = "",
      "Run one pipeline command into an output directory, as the command-line tool does.");
}
