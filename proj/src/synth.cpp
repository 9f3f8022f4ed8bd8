#include "jvae/synth.hpp"

#include "jvae/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace jvae::synth {

std::string_view to_string(InteractionMode m) {
  return m == InteractionMode::dense ? "dense" : "sparse";
}

InteractionMode parse_interaction_mode(std::string_view text) {
  if (text == "dense") return InteractionMode::dense;
  if (text == "sparse") return InteractionMode::sparse;
  throw std::invalid_argument("unknown interaction mode '" + std::string(text) + "'");
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::cross_before: return "cross_before";
    case Decision::yield_to_vehicle: return "yield_to_vehicle";
    case Decision::continue_: return "continue";
  }
  return "?";
}

void validate(const GenConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("gen config: ") + what);
  };
  require(c.n_scenes > 0, "n_scenes must be positive");
  require(c.agents_min >= 1 && c.agents_max >= c.agents_min, "agents range must satisfy 1 <= min <= max");
  for (double p : {c.yield_prob, c.continue_prob, c.bicyclist_prob, c.val_fraction, c.test_fraction}) {
    require(p >= 0.0 && p <= 1.0, "probabilities must lie in [0, 1]");
  }
  require(c.val_fraction + c.test_fraction < 1.0, "val + test fractions must leave training scenes");
  require(c.ego_speed > 0.0 && c.ped_speed > 0.0, "speeds must be positive");
  require(c.bicyclist_speed_factor > 0.0, "bicyclist speed factor must be positive");
  require(c.decision_noise >= 0.0, "decision_noise must be non-negative");
  require(c.dt > 0.0, "dt must be positive");
  require(c.obs_len >= 2 && c.pred_len >= 1, "obs_len >= 2 and pred_len >= 1 required");
  require(c.obs_len + c.pred_len >= 3, "at least 3 positions per agent required");
  require(c.dynamics.hurry_factor > 1.0, "hurry factor must exceed 1");
  require(c.dynamics.k_goal >= 0.0 && c.dynamics.k_repulse >= 0.0 && c.dynamics.a_max > 0.0 &&
              c.dynamics.ttc_threshold > 0.0 && c.dynamics.collision_radius > 0.0,
          "dynamics constants out of range");
}

double time_to_collision(const AgentState& a, const AgentState& b, double collision_radius) {
  const Vec2 r = a.position - b.position;
  const Vec2 w = a.velocity - b.velocity;
  const double ww = w.squared_norm();
  if (ww < 1e-12) return std::numeric_limits<double>::infinity();
  const double t = -r.dot(w) / ww;
  if (t <= 0.0) return std::numeric_limits<double>::infinity();
  if ((r + w * t).norm() >= collision_radius) return std::numeric_limits<double>::infinity();
  return t;
}

namespace {

double max_speed(const GenConfig& c) { return 1.5 * std::max(c.ego_speed, c.ped_speed); }

Vec2 clamp_norm(Vec2 v, double limit) {
  const double n = v.norm();
  return n > limit ? v * (limit / n) : v;
}

Vec2 goal_velocity(const AgentState& s, double speed) {
  const Vec2 d = s.goal - s.position;
  const double n = d.norm();
  if (n < 1e-9) return {};
  return d * (speed / n);
}

// Unit vector pushing `a` away from `b` at their predicted closest approach;
// falls back to the current separation when they would meet head-on.
Vec2 separation_direction(const AgentState& a, const AgentState& b, double ttc) {
  Vec2 sep = (a.position - b.position) + (a.velocity - b.velocity) * ttc;
  if (sep.norm() < 0.1) sep = a.position - b.position;
  const double n = sep.norm();
  if (n < 1e-9) return {};
  return sep / n;
}

}  // namespace

std::vector<AgentState> step_dynamics(const std::vector<AgentState>& state,
                                      const std::vector<Decision>& decisions, bool ego_yields,
                                      const GenConfig& config) {
  const Dynamics& dyn = config.dynamics;
  const AgentState* ego = nullptr;
  for (const auto& s : state) {
    if (s.ego) ego = &s;
  }
  std::vector<AgentState> next = state;
  std::size_t k = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const AgentState& s = state[i];
    Vec2 accel;
    if (s.ego) {
      accel = (goal_velocity(s, s.speed) - s.velocity) * dyn.k_goal;
      if (ego_yields) {
        double ttc = std::numeric_limits<double>::infinity();
        for (const auto& o : state) {
          if (!o.ego) ttc = std::min(ttc, time_to_collision(o, s, dyn.collision_radius));
        }
        if (ttc < dyn.ttc_threshold) {
          const double vn = s.velocity.norm();
          const Vec2 heading = vn > 1e-9 ? s.velocity / vn : Vec2{1.0, 0.0};
          accel += heading * (-dyn.k_repulse * std::max(0.0, 1.0 - ttc / dyn.ttc_threshold));
        }
      }
    } else {
      const Decision d = decisions.at(k++);
      const double ttc = ego ? time_to_collision(s, *ego, dyn.collision_radius)
                             : std::numeric_limits<double>::infinity();
      const bool triggered = ttc < dyn.ttc_threshold;
      double speed = s.speed;
      if (triggered && d == Decision::cross_before) speed *= dyn.hurry_factor;
      accel = (goal_velocity(s, speed) - s.velocity) * dyn.k_goal;
      if (triggered && d == Decision::yield_to_vehicle) {
        accel += separation_direction(s, *ego, ttc) *
                 (dyn.k_repulse * std::max(0.0, 1.0 - ttc / dyn.ttc_threshold));
      }
    }
    accel = clamp_norm(accel, dyn.a_max);
    AgentState& n = next[i];
    n.velocity = clamp_norm(s.velocity + accel * config.dt, max_speed(config));
    n.position = s.position + n.velocity * config.dt;
  }
  return next;
}

namespace {

enum class Role { crosser, walker, background, far };

struct Layout {
  std::vector<AgentState> states;  // ego first
  std::vector<AgentKind> kinds;
};

std::mt19937_64 stream(const GenConfig& c, int index, int attempt, int draw) {
  std::seed_seq seq{std::uint64_t(c.seed), std::uint64_t(index), std::uint64_t(attempt), std::uint64_t(draw)};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool coin(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

// States at the current (last observed) time in the world frame: the ego at
// the origin driving along +x.
Layout draw_layout(const GenConfig& c, std::mt19937_64& rng) {
  Layout layout;
  const double horizon = (c.obs_len + c.pred_len) * c.dt;
  const double ego_v = c.ego_speed * uniform(rng, 0.3, 1.3);
  AgentState ego;
  ego.ego = true;
  ego.velocity = {ego_v, 0.0};
  ego.speed = ego_v;
  ego.goal = {ego_v * 100.0, 0.0};
  layout.states.push_back(ego);
  layout.kinds.push_back(AgentKind::ego_vehicle);

  const int n = std::uniform_int_distribution<int>(c.agents_min, c.agents_max)(rng);
  std::normal_distribution<double> goal_noise(0.0, c.decision_noise);
  for (int k = 0; k < n; ++k) {
    Role role = Role::far;
    if (c.interaction_mode == InteractionMode::dense) {
      const double u = uniform(rng, 0.0, 1.0);
      role = k == 0 || u < 0.4 ? Role::crosser : (u < 0.8 ? Role::walker : Role::background);
    }
    const bool bike = coin(rng, c.bicyclist_prob);
    const double v = c.ped_speed * uniform(rng, 0.8, 1.2) * (bike ? c.bicyclist_speed_factor : 1.0);
    const double side = coin(rng, 0.5) ? 1.0 : -1.0;
    AgentState s;
    s.speed = v;
    switch (role) {
      case Role::crosser: {
        // Reaches the ego's lane roughly when the ego does.
        const double t_cross = uniform(rng, 3.4, 4.5);
        const double offset = uniform(rng, -1.2, 1.2);
        const double x = ego_v * t_cross + uniform(rng, -1.0, 1.0);
        s.position = {x, -side * v * (t_cross + offset)};
        s.goal = {x, side * (std::abs(s.position.y) + 8.0)};
        break;
      }
      case Role::walker: {
        const double dir = coin(rng, 0.5) ? 1.0 : -1.0;
        s.position = {uniform(rng, -5.0, 30.0), side * uniform(rng, 4.0, 9.0)};
        s.goal = {s.position.x + dir * 100.0, s.position.y};
        break;
      }
      case Role::background:
      case Role::far: {
        const double dir = coin(rng, 0.5) ? 1.0 : -1.0;
        const double angle = uniform(rng, -0.5, 0.5);
        const double lo = role == Role::far ? 22.0 + horizon * v : 12.0;
        const double hi = role == Role::far ? 45.0 + horizon * v : 35.0;
        s.position = {uniform(rng, -20.0, 60.0), side * uniform(rng, lo, hi)};
        // Heading away from the road when the angle points at it.
        const double vy = std::abs(std::sin(angle)) * side;
        s.goal = s.position + Vec2{dir * std::cos(angle), vy} * 100.0;
        break;
      }
    }
    s.goal += Vec2{goal_noise(rng), goal_noise(rng)};
    s.velocity = goal_velocity(s, v);
    layout.states.push_back(s);
    layout.kinds.push_back(bike ? AgentKind::bicyclist : AgentKind::pedestrian);
  }
  return layout;
}

struct Drawn {
  std::vector<Decision> decisions;
  bool ego_yields = false;
};

Drawn draw_decisions(const GenConfig& c, std::size_t n_other, std::mt19937_64& rng) {
  Drawn d;
  d.ego_yields = coin(rng, c.yield_prob);
  for (std::size_t k = 0; k < n_other; ++k) {
    if (coin(rng, c.continue_prob)) {
      d.decisions.push_back(Decision::continue_);
    } else {
      d.decisions.push_back(coin(rng, 0.5) ? Decision::cross_before : Decision::yield_to_vehicle);
    }
  }
  return d;
}

Scene simulate(const GenConfig& c, const Layout& layout, const Drawn& drawn, int index) {
  const int total = c.obs_len + c.pred_len;
  // Rewind at constant velocity so the layout holds at the last observed step.
  std::vector<AgentState> state = layout.states;
  for (auto& s : state) s.position = s.position - s.velocity * (c.dt * (c.obs_len - 1));

  Scene scene;
  scene.scene_id = std::string(to_string(c.interaction_mode)) + "-" + std::to_string(c.seed) + "-" +
                   std::to_string(index);
  scene.dt = c.dt;
  scene.obs_len = c.obs_len;
  scene.pred_len = c.pred_len;
  for (std::size_t k = 0; k < state.size(); ++k) {
    Agent a;
    a.id = index * 16 + int(k);
    a.kind = layout.kinds[k];
    scene.agents.push_back(std::move(a));
  }
  for (int t = 0; t < total; ++t) {
    for (std::size_t k = 0; k < state.size(); ++k) scene.agents[k].positions.push_back(state[k].position);
    if (t + 1 < total) state = step_dynamics(state, drawn.decisions, drawn.ego_yields, c);
  }
  return to_scene_frame(scene);
}

Split split_of(const GenConfig& c, int index) {
  const int n_test = int(std::lround(c.n_scenes * c.test_fraction));
  const int n_val = int(std::lround(c.n_scenes * c.val_fraction));
  const int n_train = c.n_scenes - n_val - n_test;
  if (index < n_train) return Split::train;
  if (index < n_train + n_val) return Split::val;
  return Split::test;
}

bool has_interaction(const Scene& scene) {
  for (const auto& tag : analysis::tag_interactions(scene)) {
    if (tag.interacting) return true;
  }
  return false;
}

constexpr int kMaxAttempts = 64;

}  // namespace

Generated generate_scene(const GenConfig& config, int index, int decision_draw) {
  validate(config);
  int attempt = 0;
  for (;; ++attempt) {
    auto layout_rng = stream(config, index, attempt, 0);
    const Layout layout = draw_layout(config, layout_rng);
    auto decision_rng = stream(config, index, attempt, 1);
    Drawn drawn = draw_decisions(config, layout.states.size() - 1, decision_rng);
    Scene scene = simulate(config, layout, drawn, index);
    const bool accept = config.interaction_mode == InteractionMode::sparse || has_interaction(scene) ||
                        attempt + 1 == kMaxAttempts;
    if (!accept) continue;
    if (decision_draw > 0) {
      auto redraw_rng = stream(config, index, attempt, 1 + decision_draw);
      drawn = draw_decisions(config, layout.states.size() - 1, redraw_rng);
      scene = simulate(config, layout, drawn, index);
    }
    scene.split = split_of(config, index);
    Generated out;
    std::size_t k = 0;
    for (const Agent& a : scene.agents) {
      if (!a.is_ego()) out.decisions.push_back({scene.scene_id, a.id, drawn.decisions[k++]});
    }
    validate(scene);
    out.data.add(std::move(scene));
    return out;
  }
}

Generated generate(const GenConfig& config) {
  validate(config);
  Generated out;
  for (int i = 0; i < config.n_scenes; ++i) {
    Generated one = generate_scene(config, i);
    for (auto split : {Split::train, Split::val, Split::test}) {
      for (auto& s : one.data.of(split)) out.data.add(std::move(s));
    }
    out.decisions.insert(out.decisions.end(), one.decisions.begin(), one.decisions.end());
  }
  return out;
}

void write_decisions(std::ostream& out, const std::vector<DecisionRecord>& decisions) {
  out << "scene_id,agent_id,label\n";
  for (const auto& d : decisions) out << d.scene_id << ',' << d.agent_id << ',' << to_string(d.label) << '\n';
}

void save_decisions(const std::filesystem::path& path, const std::vector<DecisionRecord>& decisions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write decision file " + path.string());
  write_decisions(out, decisions);
}

}  // namespace jvae::synth
