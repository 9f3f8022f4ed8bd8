#include "jvae/prediction.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace jvae {

using ordered_json = nlohmann::ordered_json;

const AgentPrediction& PredictionSet::of(int agent_id) const {
  for (const auto& a : agents) {
    if (a.agent_id == agent_id) return a;
  }
  throw DataError("scene " + scene.scene_id + ": no prediction for agent " + std::to_string(agent_id));
}

std::string format_prediction_line(const PredictionSet& p) {
  ordered_json j = ordered_json::parse(format_scene_line(p.scene));
  auto& agents = j["agents"];
  for (std::size_t i = 0; i < p.scene.agents.size(); ++i) {
    const AgentPrediction& ap = p.of(p.scene.agents[i].id);
    ordered_json samples = ordered_json::array();
    for (const auto& traj : ap.samples) {
      ordered_json t = ordered_json::array();
      for (const Vec2& v : traj) t.push_back({v.x, v.y});
      samples.push_back(std::move(t));
    }
    agents[i]["samples"] = std::move(samples);
  }
  return j.dump();
}

PredictionSet parse_prediction_line(std::string_view line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed prediction record: ") + e.what());
  }
  PredictionSet p;
  std::vector<AgentPrediction> preds;
  try {
    for (auto& ja : j.at("agents")) {
      AgentPrediction ap;
      ap.agent_id = ja.at("id").get<int>();
      for (const auto& jt : ja.at("samples")) {
        Trajectory t;
        for (const auto& v : jt) {
          if (!v.is_array() || v.size() != 2) throw DataError("sample position must be [x, y]");
          t.push_back({v[0].get<double>(), v[1].get<double>()});
        }
        ap.samples.push_back(std::move(t));
      }
      ja.erase("samples");
      preds.push_back(std::move(ap));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed prediction record: ") + e.what());
  }
  p.scene = parse_scene_line(j.dump());
  p.agents = std::move(preds);
  const std::size_t n = p.n_samples();
  if (n == 0) throw DataError("scene " + p.scene.scene_id + ": prediction without samples");
  for (const auto& ap : p.agents) {
    if (ap.samples.size() != n) throw DataError("scene " + p.scene.scene_id + ": ragged sample counts");
    for (const auto& t : ap.samples) {
      if (t.size() != std::size_t(p.scene.pred_len)) {
        throw DataError("scene " + p.scene.scene_id + ": sample length differs from pred_len");
      }
    }
  }
  return p;
}

void write_predictions(std::ostream& out, const std::vector<PredictionSet>& preds) {
  for (const auto& p : preds) out << format_prediction_line(p) << '\n';
}

std::vector<PredictionSet> read_predictions(std::istream& in) {
  std::vector<PredictionSet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_prediction_line(line));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_predictions(const std::filesystem::path& path, const std::vector<PredictionSet>& preds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write prediction file " + path.string());
  write_predictions(out, preds);
}

std::vector<PredictionSet> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prediction file " + path.string());
  return read_predictions(in);
}

}  // namespace jvae
