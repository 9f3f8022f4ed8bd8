#include "jvae/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace jvae {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::ego_vehicle: return "ego_vehicle";
    case AgentKind::pedestrian: return "pedestrian";
    case AgentKind::bicyclist: return "bicyclist";
  }
  return "?";
}

AgentKind parse_agent_kind(std::string_view text) {
  if (text == "ego_vehicle") return AgentKind::ego_vehicle;
  if (text == "pedestrian") return AgentKind::pedestrian;
  if (text == "bicyclist") return AgentKind::bicyclist;
  throw DataError("unknown agent kind '" + std::string(text) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw DataError("unknown split '" + std::string(text) + "'");
}

const Agent& Scene::ego() const { return agents[ego_index()]; }

std::size_t Scene::ego_index() const {
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].is_ego()) return i;
  }
  throw DataError("scene " + scene_id + ": missing ego");
}

std::vector<Vec2> Scene::future(const Agent& a) const {
  const auto begin = a.positions.begin() + obs_len;
  return {begin, begin + pred_len};
}

std::vector<Scene>& SplitDataset::of(Split s) {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return train;
}

const std::vector<Scene>& SplitDataset::of(Split s) const {
  return const_cast<SplitDataset*>(this)->of(s);
}

void SplitDataset::add(Scene scene) { of(scene.split).push_back(std::move(scene)); }

void validate(const Scene& scene) {
  auto fail = [&](const std::string& what) {
    throw DataError("scene " + scene.scene_id + ": " + what);
  };
  if (scene.scene_id.empty()) throw DataError("scene with empty scene_id");
  if (!(scene.dt > 0.0) || !std::isfinite(scene.dt)) fail("dt must be positive");
  if (scene.obs_len < 1) fail("obs_len must be >= 1");
  if (scene.pred_len < 1) fail("pred_len must be >= 1");
  if (scene.agents.empty()) fail("no agents");
  std::size_t egos = 0;
  std::set<int> ids;
  const auto needed = std::size_t(scene.obs_len + scene.pred_len);
  for (const Agent& a : scene.agents) {
    if (!ids.insert(a.id).second) fail("duplicate agent id " + std::to_string(a.id));
    if (a.is_ego()) ++egos;
    if (a.positions.size() < needed) {
      fail("agent " + std::to_string(a.id) + " has " + std::to_string(a.positions.size()) +
           " positions, needs " + std::to_string(needed));
    }
    for (const Vec2& p : a.positions) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        fail("agent " + std::to_string(a.id) + " has a non-finite position");
      }
    }
  }
  if (egos == 0) fail("missing ego");
  if (egos > 1) fail("multiple ego");
}

namespace {

const std::set<std::string> kSceneKeys = {"scene_id", "split", "dt", "obs_len", "pred_len", "agents"};
const std::set<std::string> kAgentKeys = {"id", "kind", "xy"};

void reject_unknown(const ordered_json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw DataError(where + ": unknown key '" + key + "'");
  }
  for (const auto& key : allowed) {
    if (!obj.contains(key)) throw DataError(where + ": missing key '" + key + "'");
  }
}

}  // namespace

Scene parse_scene_line(std::string_view line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed record: ") + e.what());
  }
  if (!j.is_object()) throw DataError("malformed record: expected a JSON object");
  Scene s;
  try {
    if (j.contains("scene_id")) s.scene_id = j.at("scene_id").get<std::string>();
    const std::string where = "scene " + s.scene_id;
    reject_unknown(j, kSceneKeys, where);
    s.split = parse_split(j.at("split").get<std::string>());
    s.dt = j.at("dt").get<double>();
    s.obs_len = j.at("obs_len").get<int>();
    s.pred_len = j.at("pred_len").get<int>();
    for (const auto& ja : j.at("agents")) {
      if (!ja.is_object()) throw DataError(where + ": agent record is not an object");
      reject_unknown(ja, kAgentKeys, where + " agent");
      Agent a;
      a.id = ja.at("id").get<int>();
      a.kind = parse_agent_kind(ja.at("kind").get<std::string>());
      for (const auto& p : ja.at("xy")) {
        if (!p.is_array() || p.size() != 2) throw DataError(where + ": position must be [x, y]");
        a.positions.push_back({p[0].get<double>(), p[1].get<double>()});
      }
      s.agents.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("scene " + s.scene_id + ": malformed record: " + e.what());
  }
  validate(s);
  return s;
}

std::string format_scene_line(const Scene& scene) {
  ordered_json j;
  j["scene_id"] = scene.scene_id;
  j["split"] = to_string(scene.split);
  j["dt"] = scene.dt;
  j["obs_len"] = scene.obs_len;
  j["pred_len"] = scene.pred_len;
  ordered_json agents = ordered_json::array();
  for (const Agent& a : scene.agents) {
    ordered_json ja;
    ja["id"] = a.id;
    ja["kind"] = to_string(a.kind);
    ordered_json xy = ordered_json::array();
    for (const Vec2& p : a.positions) xy.push_back({p.x, p.y});
    ja["xy"] = std::move(xy);
    agents.push_back(std::move(ja));
  }
  j["agents"] = std::move(agents);
  return j.dump();
}

SplitDataset read_scenes(std::istream& in) {
  SplitDataset data;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Scene s;
    try {
      s = parse_scene_line(line);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(s.scene_id).second) {
      throw DataError("line " + std::to_string(line_no) + ": scene " + s.scene_id +
                      ": duplicate scene_id");
    }
    data.add(std::move(s));
  }
  return data;
}

SplitDataset load_scenes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scene file " + path.string());
  try {
    return read_scenes(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_scenes(std::ostream& out, const SplitDataset& data) {
  for (Split s : {Split::train, Split::val, Split::test}) {
    for (const Scene& scene : data.of(s)) out << format_scene_line(scene) << '\n';
  }
}

void save_scenes(const std::filesystem::path& path, const SplitDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write scene file " + path.string());
  write_scenes(out, data);
}

Scene order_agents(const Scene& scene) {
  Scene out = scene;
  const Vec2 ego_pos = scene.current(scene.ego());
  std::stable_sort(out.agents.begin(), out.agents.end(), [&](const Agent& a, const Agent& b) {
    if (a.is_ego() != b.is_ego()) return a.is_ego();
    const double da = (out.current(a) - ego_pos).squared_norm();
    const double db = (out.current(b) - ego_pos).squared_norm();
    if (da != db) return da < db;
    return a.id < b.id;
  });
  return out;
}

Scene to_scene_frame(const Scene& scene) {
  const Agent& ego = scene.ego();
  const Vec2 origin = scene.current(ego);
  Vec2 heading{1.0, 0.0};
  if (scene.obs_len >= 2) {
    const Vec2 d = origin - ego.positions[std::size_t(scene.obs_len) - 2];
    if (d.norm() > 1e-9) heading = d / d.norm();
  }
  Scene out = scene;
  for (Agent& a : out.agents) {
    for (Vec2& p : a.positions) {
      const Vec2 r = p - origin;
      p = {r.x * heading.x + r.y * heading.y, -r.x * heading.y + r.y * heading.x};
    }
  }
  return out;
}

Kinematics kinematics(const std::vector<Vec2>& p, double dt) {
  const std::size_t n = p.size();
  if (n < 3) throw DataError("kinematics needs at least 3 positions, got " + std::to_string(n));
  Kinematics k;
  k.velocity.resize(n);
  k.acceleration.resize(n);
  k.velocity[0] = (p[1] - p[0]) / dt;
  k.velocity[n - 1] = (p[n - 1] - p[n - 2]) / dt;
  for (std::size_t t = 1; t + 1 < n; ++t) k.velocity[t] = (p[t + 1] - p[t - 1]) / (2.0 * dt);
  auto second_difference = [&](std::size_t t) {
    return (p[t + 1] - p[t] * 2.0 + p[t - 1]) / (dt * dt);
  };
  for (std::size_t t = 1; t + 1 < n; ++t) k.acceleration[t] = second_difference(t);
  k.acceleration[0] = second_difference(1);
  k.acceleration[n - 1] = second_difference(n - 2);
  return k;
}

}  // namespace jvae
