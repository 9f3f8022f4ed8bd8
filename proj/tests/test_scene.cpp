#include "jvae/scene.hpp"
#include "jvae/synth.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace jvae;

namespace {

std::string two_agent_line() {
  return R"({"scene_id":"s1","split":"train","dt":0.5,"obs_len":1,"pred_len":6,"agents":[)"
         R"({"id":0,"kind":"ego_vehicle","xy":[[0,0],[1,0],[2,0],[3,0],[4,0],[5,0],[6,0]]},)"
         R"({"id":3,"kind":"pedestrian","xy":[[5,5],[5,4.5],[5,4],[5,3.5],[5,3],[5,2.5],[5,2]]}]})";
}

}  // namespace

TEST_CASE("load a one-scene file") {
  std::istringstream in(two_agent_line() + "\n");
  const auto data = read_scenes(in);
  REQUIRE(data.train.size() == 1);
  CHECK(data.train[0].agents.size() == 2);
  CHECK(data.train[0].obs_len == 1);
  CHECK(data.train[0].pred_len == 6);
}

TEST_CASE("two ego vehicles are rejected") {
  std::string line = two_agent_line();
  line.replace(line.find("pedestrian"), 10, "ego_vehicle");
  std::istringstream in(line + "\n");
  try {
    (void)read_scenes(in);
    FAIL("accepted two egos");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("multiple ego") != std::string::npos);
    CHECK(msg.find("s1") != std::string::npos);
    CHECK(msg.find("line 1") != std::string::npos);
  }
}

TEST_CASE("malformed records are rejected with a line number") {
  const std::vector<std::string> bad = {
      "{not json",
      R"({"scene_id":"x","split":"train","dt":0.5,"obs_len":1,"pred_len":1,"agents":[{"id":0,"kind":"pedestrian","xy":[[0,0],[1,1]]}]})",
      R"({"scene_id":"x","split":"train","dt":0.5,"obs_len":1,"pred_len":1,"extra":1,"agents":[{"id":0,"kind":"ego_vehicle","xy":[[0,0],[1,1]]}]})",
      R"({"scene_id":"x","split":"train","dt":0.5,"obs_len":1,"pred_len":6,"agents":[{"id":0,"kind":"ego_vehicle","xy":[[0,0],[1,1]]}]})",
      R"({"scene_id":"x","split":"train","dt":-1,"obs_len":1,"pred_len":1,"agents":[{"id":0,"kind":"ego_vehicle","xy":[[0,0],[1,1]]}]})",
  };
  for (const auto& b : bad) {
    CAPTURE(b);
    std::istringstream in("\n" + b + "\n");
    try {
      (void)read_scenes(in);
      FAIL("accepted a malformed record");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
}

TEST_CASE("write(load(f)) is byte-stable on a generated corpus") {
  synth::GenConfig c;
  c.n_scenes = 40;
  c.seed = 9;
  const auto gen = synth::generate(c);
  std::ostringstream first;
  write_scenes(first, gen.data);
  std::istringstream in(first.str());
  const auto loaded = read_scenes(in);
  std::ostringstream second;
  write_scenes(second, loaded);
  CHECK(first.str() == second.str());

  // Positions survive the round trip to well below a nanometre.
  double worst = 0.0;
  for (Split s : {Split::train, Split::val, Split::test}) {
    for (std::size_t k = 0; k < gen.data.of(s).size(); ++k) {
      const auto& a = gen.data.of(s)[k];
      const auto& b = loaded.of(s)[k];
      for (std::size_t i = 0; i < a.agents.size(); ++i) {
        for (std::size_t t = 0; t < a.agents[i].positions.size(); ++t) {
          worst = std::max(worst, (a.agents[i].positions[t] - b.agents[i].positions[t]).norm());
        }
      }
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("canonical agent order") {
  Scene s;
  s.scene_id = "order";
  s.obs_len = 1;
  s.pred_len = 1;
  auto agent = [](int id, AgentKind kind, Vec2 p) { return Agent{id, kind, {p, p}}; };

  SUBCASE("ego first, then nearest") {
    s.agents = {agent(5, AgentKind::pedestrian, {3, 0}), agent(0, AgentKind::ego_vehicle, {0, 0}),
                agent(9, AgentKind::pedestrian, {0, 1})};
    const auto o = order_agents(s);
    CHECK(o.agents[0].id == 0);
    CHECK(o.agents[1].id == 9);
    CHECK(o.agents[2].id == 5);
  }
  SUBCASE("ties broken by id") {
    s.agents = {agent(7, AgentKind::pedestrian, {0, 2}), agent(1, AgentKind::ego_vehicle, {0, 0}),
                agent(4, AgentKind::pedestrian, {2, 0})};
    const auto o = order_agents(s);
    CHECK(o.agents[1].id == 4);
    CHECK(o.agents[2].id == 7);
  }
  SUBCASE("ego-only scene is unchanged") {
    s.agents = {agent(2, AgentKind::ego_vehicle, {1, 1})};
    CHECK(order_agents(s) == s);
  }
}

TEST_CASE("order_agents is an idempotent permutation") {
  synth::GenConfig c;
  c.n_scenes = 30;
  c.agents_min = 3;
  c.agents_max = 6;
  const auto gen = synth::generate(c);
  std::mt19937_64 rng(4);
  for (const Scene& s : gen.data.train) {
    Scene shuffled = s;
    std::shuffle(shuffled.agents.begin(), shuffled.agents.end(), rng);
    const Scene once = order_agents(shuffled);
    CHECK(order_agents(once) == once);
    CHECK(once == order_agents(s));
    std::multiset<int> a, b;
    for (const auto& ag : s.agents) a.insert(ag.id);
    for (const auto& ag : once.agents) b.insert(ag.id);
    CHECK(a == b);
  }
}

TEST_CASE("scene frame puts the ego at the origin heading along +x") {
  Scene s = testing::line_scene(2);
  for (auto& a : s.agents) {
    for (auto& p : a.positions) p = Vec2{-p.y, p.x} + Vec2{10.0, -4.0};  // rotate 90° and shift
  }
  const Scene f = to_scene_frame(s);
  const auto& ego = f.ego();
  CHECK(f.current(ego).norm() < 1e-12);
  const Vec2 heading = f.current(ego) - ego.positions[0];
  CHECK(heading.y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(heading.x > 0.0);
  // Distances are preserved.
  const Scene ref = testing::line_scene(2);
  for (std::size_t i = 0; i < ref.agents.size(); ++i) {
    const double d0 = (ref.agents[i].positions[3] - ref.agents[0].positions[3]).norm();
    const double d1 = (f.agents[i].positions[3] - f.agents[0].positions[3]).norm();
    CHECK(d0 == doctest::Approx(d1).epsilon(1e-12));
  }
}

TEST_CASE("kinematics") {
  SUBCASE("uniform motion") {
    std::vector<Vec2> p;
    for (int t = 0; t < 6; ++t) p.push_back({double(t), 0.0});
    const auto k = kinematics(p, 0.5);
    REQUIRE(k.velocity.size() == p.size());
    for (std::size_t t = 0; t < p.size(); ++t) {
      CHECK(k.velocity[t].norm() == doctest::Approx(2.0));
      CHECK(k.acceleration[t].norm() == doctest::Approx(0.0));
    }
  }
  SUBCASE("stationary") {
    const auto k = kinematics(std::vector<Vec2>(4, Vec2{3.0, -1.0}), 0.5);
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(k.velocity[t].norm() == 0.0);
      CHECK(k.acceleration[t].norm() == 0.0);
    }
  }
  SUBCASE("quadratic path has constant acceleration 2") {
    std::vector<Vec2> p;
    for (int k = 0; k < 8; ++k) {
      const double t = 0.5 * k;
      p.push_back({t * t, 0.0});
    }
    const auto k = kinematics(p, 0.5);
    for (std::size_t t = 1; t + 1 < p.size(); ++t) CHECK(std::abs(k.acceleration[t].norm() - 2.0) <= 1e-9);
  }
  SUBCASE("fewer than three positions") {
    CHECK_THROWS_AS(kinematics(std::vector<Vec2>(2), 0.5), DataError);
  }
}

TEST_CASE("split lookups and duplicate scene ids") {
  std::istringstream in(two_agent_line() + "\n" + two_agent_line() + "\n");
  CHECK_THROWS_AS(read_scenes(in), DataError);
  CHECK_THROWS_AS(load_scenes("/nonexistent/scenes.jsonl"), DataError);
}
