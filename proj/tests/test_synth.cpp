#include "jvae/analysis.hpp"
#include "jvae/synth.hpp"

#include <doctest.h>

#include <map>
#include <sstream>

using namespace jvae;
using namespace jvae::synth;

namespace {

std::string dump(const Generated& g) {
  std::ostringstream out;
  write_scenes(out, g.data);
  write_decisions(out, g.decisions);
  return out.str();
}

std::vector<Scene> all(const SplitDataset& d) {
  std::vector<Scene> out = d.train;
  out.insert(out.end(), d.val.begin(), d.val.end());
  out.insert(out.end(), d.test.begin(), d.test.end());
  return out;
}

AgentState walker(Vec2 p, Vec2 v) {
  AgentState s;
  s.position = p;
  s.velocity = v;
  s.speed = v.norm();
  s.goal = p + v * 100.0;
  return s;
}

AgentState car(Vec2 p, Vec2 v) {
  AgentState s = walker(p, v);
  s.ego = true;
  return s;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  GenConfig c;
  c.seed = 1;
  c.n_scenes = 1;
  CHECK(dump(generate(c)) == dump(generate(c)));
  c.n_scenes = 20;
  c.interaction_mode = InteractionMode::sparse;
  CHECK(dump(generate(c)) == dump(generate(c)));
}

TEST_CASE("one decision label per non-ego agent") {
  GenConfig c;
  c.n_scenes = 25;
  const auto g = generate(c);
  std::map<std::string, int> per_scene;
  for (const auto& d : g.decisions) ++per_scene[d.scene_id];
  for (const Scene& s : all(g.data)) CHECK(per_scene[s.scene_id] == int(s.agents.size()) - 1);
}

TEST_CASE("sparse corpus never satisfies the interaction predicate") {
  GenConfig c;
  c.n_scenes = 200;
  c.interaction_mode = InteractionMode::sparse;
  const auto scenes = all(generate(c).data);
  for (const auto& tag : analysis::tag_interactions(scenes)) CHECK_FALSE(tag.interacting);
}

TEST_CASE("dense corpus: at least 90% of scenes hold an interacting agent") {
  GenConfig c;
  c.n_scenes = 500;
  const auto scenes = all(generate(c).data);
  int with_interaction = 0;
  for (const Scene& s : scenes) {
    const auto tags = analysis::tag_interactions(s);
    if (std::any_of(tags.begin(), tags.end(), [](const auto& t) { return t.interacting; })) ++with_interaction;
  }
  CHECK(double(with_interaction) / double(scenes.size()) >= 0.9);
}

TEST_CASE("speeds stay below 1.5 times the fastest preferred speed") {
  for (auto mode : {InteractionMode::dense, InteractionMode::sparse}) {
    GenConfig c;
    c.n_scenes = 100;
    c.interaction_mode = mode;
    const double bound = 1.5 * std::max(c.ego_speed, c.ped_speed);
    for (const Scene& s : all(generate(c).data)) {
      for (const Agent& a : s.agents) {
        for (std::size_t t = 1; t < a.positions.size(); ++t) {
          CHECK((a.positions[t] - a.positions[t - 1]).norm() / s.dt <= bound + 1e-9);
        }
      }
    }
  }
}

TEST_CASE("redrawn decisions keep the past and spread the futures") {
  GenConfig c;
  c.n_scenes = 60;
  int multimodal = 0;
  for (int index = 0; index < c.n_scenes; ++index) {
    std::vector<Scene> draws;
    for (int d = 0; d < 12; ++d) {
      const auto g = generate_scene(c, index, d);
      draws.push_back(all(g.data).front());
    }
    const Scene& base = draws.front();
    bool spread = false;
    for (std::size_t i = 0; i < base.agents.size(); ++i) {
      for (const Scene& other : draws) {
        for (int t = 0; t < base.obs_len; ++t) CHECK(other.agents[i].positions[t] == base.agents[i].positions[t]);
      }
      if (base.agents[i].is_ego()) continue;
      for (const Scene& a : draws) {
        for (const Scene& b : draws) {
          if ((a.agents[i].positions.back() - b.agents[i].positions.back()).norm() >= 1.0) spread = true;
        }
      }
    }
    multimodal += spread ? 1 : 0;
  }
  CHECK(double(multimodal) / double(c.n_scenes) >= 0.8);
}

TEST_CASE("step dynamics") {
  GenConfig c;
  SUBCASE("a walker at its preferred velocity far from the ego advances v·dt") {
    const std::vector<AgentState> s = {car({0, 0}, {6, 0}), walker({0, 40}, {1.4, 0})};
    const auto next = step_dynamics(s, {Decision::yield_to_vehicle}, false, c);
    CHECK(next[1].position.x == doctest::Approx(1.4 * c.dt).epsilon(1e-12));
    CHECK(next[1].position.y == doctest::Approx(40.0).epsilon(1e-12));
  }
  SUBCASE("a yielding pedestrian facing the ego slows down") {
    const std::vector<AgentState> s = {car({0, 0}, {6, 0}), walker({10, 0}, {-1.4, 0})};
    const auto next = step_dynamics(s, {Decision::yield_to_vehicle}, false, c);
    CHECK(next[1].velocity.norm() < 1.4);
  }
  SUBCASE("without repulsion a yield decision is plain goal seeking") {
    c.dynamics.k_repulse = 0.0;
    std::vector<AgentState> a = {car({0, 0}, {6, 0}), walker({12, -3}, {0, 1.4}), walker({9, 2}, {0, -1.2})};
    std::vector<AgentState> b = a;
    for (int t = 0; t < 8; ++t) {
      a = step_dynamics(a, {Decision::yield_to_vehicle, Decision::yield_to_vehicle}, false, c);
      b = step_dynamics(b, {Decision::continue_, Decision::continue_}, false, c);
    }
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].position == b[i].position);
  }
}

TEST_CASE("time to collision") {
  const double r = 3.0;
  CHECK(time_to_collision(walker({10, 0}, {-1, 0}), car({0, 0}, {1, 0}), r) == doctest::Approx(5.0));
  CHECK(std::isinf(time_to_collision(walker({0, 30}, {1, 0}), car({0, 0}, {1, 0}), r)));
  CHECK(std::isinf(time_to_collision(walker({-10, 0}, {-1, 0}), car({0, 0}, {1, 0}), r)));
}

TEST_CASE("unusable configurations are rejected") {
  GenConfig c;
  c.n_scenes = 0;
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
  c = {};
  c.yield_prob = 1.5;
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
  c = {};
  c.ped_speed = 0.0;
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
}
