#pragma once

// Multi-agent scenes: data model, JSON-lines file I/O, canonical agent
// ordering and finite-difference kinematics.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace jvae {

// Malformed or inconsistent scene data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  bool operator==(const Vec2&) const = default;

  [[nodiscard]] double dot(Vec2 o) const { return x * o.x + y * o.y; }
  [[nodiscard]] double norm() const { return std::hypot(x, y); }
  [[nodiscard]] double squared_norm() const { return x * x + y * y; }
};

enum class AgentKind { ego_vehicle, pedestrian, bicyclist };

std::string_view to_string(AgentKind kind);
AgentKind parse_agent_kind(std::string_view text);

struct Agent {
  int id = 0;
  AgentKind kind = AgentKind::pedestrian;
  std::vector<Vec2> positions;

  [[nodiscard]] bool is_ego() const { return kind == AgentKind::ego_vehicle; }
  bool operator==(const Agent&) const = default;
};

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct Scene {
  std::string scene_id;
  Split split = Split::train;
  double dt = 0.5;
  // Observed positions per agent, current position included.
  int obs_len = 2;
  int pred_len = 6;
  std::vector<Agent> agents;

  [[nodiscard]] std::size_t size() const { return agents.size(); }
  [[nodiscard]] const Agent& ego() const;
  [[nodiscard]] std::size_t ego_index() const;
  // Last observed position of an agent.
  [[nodiscard]] Vec2 current(const Agent& a) const { return a.positions[std::size_t(obs_len) - 1]; }
  // Ground-truth future positions of an agent (pred_len points).
  [[nodiscard]] std::vector<Vec2> future(const Agent& a) const;

  bool operator==(const Scene&) const = default;
};

struct SplitDataset {
  std::vector<Scene> train;
  std::vector<Scene> val;
  std::vector<Scene> test;

  [[nodiscard]] std::size_t size() const { return train.size() + val.size() + test.size(); }
  [[nodiscard]] std::vector<Scene>& of(Split s);
  [[nodiscard]] const std::vector<Scene>& of(Split s) const;
  void add(Scene scene);
};

// Throws DataError naming the scene when an invariant is violated.
void validate(const Scene& scene);

Scene parse_scene_line(std::string_view line);
std::string format_scene_line(const Scene& scene);

SplitDataset read_scenes(std::istream& in);
SplitDataset load_scenes(const std::filesystem::path& path);
void write_scenes(std::ostream& out, const SplitDataset& data);
void save_scenes(const std::filesystem::path& path, const SplitDataset& data);

// Ego first, then ascending distance to the ego at the last observed step,
// ties broken by ascending id.
Scene order_agents(const Scene& scene);

// Translate and rotate so the ego's last observed position is the origin
// and its last observed heading points along +x. A stationary ego keeps the
// original orientation.
Scene to_scene_frame(const Scene& scene);

struct Kinematics {
  std::vector<Vec2> velocity;      // m/s
  std::vector<Vec2> acceleration;  // m/s²
};

// Central differences in the interior, one-sided at both ends.
Kinematics kinematics(const std::vector<Vec2>& positions, double dt);
inline Kinematics kinematics(const Agent& agent, double dt) { return kinematics(agent.positions, dt); }

}  // namespace jvae
