#include "jvae/analysis.hpp"
#include "jvae/metrics.hpp"
#include "jvae/synth.hpp"

#include <doctest.h>

#include <random>

using namespace jvae;
using namespace jvae::analysis;

namespace {

Scene scene_with(std::vector<Agent> others, int len = 8) {
  Scene s;
  s.scene_id = "a";
  s.dt = 0.5;
  s.obs_len = 2;
  s.pred_len = len - 2;
  Agent ego{0, AgentKind::ego_vehicle, {}};
  for (int t = 0; t < len; ++t) ego.positions.push_back({2.0 * t, 0.0});
  s.agents.push_back(ego);
  for (auto& a : others) s.agents.push_back(std::move(a));
  return s;
}

// Keeps a fixed offset from the ego, so it never accelerates.
Agent follower(int id, Vec2 offset, int len = 8) {
  Agent a{id, AgentKind::pedestrian, {}};
  for (int t = 0; t < len; ++t) a.positions.push_back(Vec2{2.0 * t, 0.0} + offset);
  return a;
}

std::vector<Scene> corpus(synth::InteractionMode mode, int n) {
  synth::GenConfig c;
  c.n_scenes = n;
  c.interaction_mode = mode;
  const auto d = synth::generate(c).data;
  std::vector<Scene> out = d.train;
  out.insert(out.end(), d.val.begin(), d.val.end());
  out.insert(out.end(), d.test.begin(), d.test.end());
  return out;
}

}  // namespace

TEST_CASE("closest approach cdf") {
  SUBCASE("one agent at constant distance gives a step at that distance") {
    const std::vector<Scene> s = {scene_with({follower(1, {3, 4})})};
    const auto cdf = closest_approach_cdf(s);
    REQUIRE(cdf.size() == 1);
    CHECK(cdf[0].distance == doctest::Approx(5.0));
    CHECK(cdf_at(cdf, 4.999) == 0.0);
    CHECK(cdf_at(cdf, 5.0 + 1e-12) == 1.0);
  }
  SUBCASE("agents at 2 m and 8 m") {
    const std::vector<Scene> s = {scene_with({follower(1, {0, 2}), follower(2, {0, -8})})};
    const auto cdf = closest_approach_cdf(s);
    CHECK(cdf_at(cdf, 1.9) == 0.0);
    CHECK(cdf_at(cdf, 2.0) == 0.5);
    CHECK(cdf_at(cdf, 7.9) == 0.5);
    CHECK(cdf_at(cdf, 8.0) == 1.0);
  }
  SUBCASE("sparse corpus keeps 95% of the mass beyond 20 m") {
    const auto s = corpus(synth::InteractionMode::sparse, 200);
    CHECK(cdf_at(closest_approach_cdf(s), 20.0) <= 0.05);
  }
}

TEST_CASE("acceleration versus distance") {
  const auto edges = default_bin_edges();
  SUBCASE("uniform motion is zero in every visited bin") {
    const std::vector<Scene> s = {scene_with({follower(1, {0, 4}), follower(2, {1, -17})})};
    const auto c = accel_vs_distance(s, edges);
    int visited = 0;
    for (const auto& b : c) {
      if (!b.value) continue;
      ++visited;
      CHECK(*b.value == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }
    CHECK(visited == 2);
    CHECK_FALSE(c[10].value.has_value());  // empty bins are absent, not zero
  }
  SUBCASE("a hand-built spike at 4 m lands in its bin") {
    // Fixed 4 m offset with a single 0.5 m kick at t = 3: the central second
    // difference there is −2·0.5/dt² = −4 m/s², the largest along the path.
    Agent a = follower(1, {0, 4});
    a.positions[3].x += 0.5;
    const std::vector<Scene> s = {scene_with({a})};
    const auto c = accel_vs_distance(s, edges);
    REQUIRE(c[1].value.has_value());
    CHECK(*c[1].value == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("dense corpus: 8 m bin above the 30 m bin, peak within 10 m") {
    const auto s = corpus(synth::InteractionMode::dense, 200);
    const auto c = accel_vs_distance(s, edges);
    REQUIRE(c[3].value.has_value());  // [7.5, 10)
    REQUIRE(c[12].value.has_value());  // [30, 32.5)
    CHECK(*c[3].value > *c[12].value);
    const auto peak = peak_bin(c);
    REQUIRE(peak.has_value());
    CHECK(c[*peak].high <= 10.0);
  }
  SUBCASE("sparse corpus shows no peak within 10 m") {
    const auto s = corpus(synth::InteractionMode::sparse, 200);
    const auto c = accel_vs_distance(s, edges);
    const auto peak = peak_bin(c);
    REQUIRE(peak.has_value());
    CHECK(c[*peak].low >= 10.0);
  }
}

TEST_CASE("error versus proximity") {
  const auto edges = default_bin_edges();
  std::vector<metrics::AgentRecord> records;
  for (int k = 0; k < 4; ++k) {
    metrics::AgentRecord r;
    r.agent_id = k;
    r.closest_approach = 3.0 + 0.3 * k;
    r.fde = {0.5 * k, 1.0 + k};
    records.push_back(r);
  }
  const auto c = error_vs_proximity(records, edges, 1);
  REQUIRE(c[1].value.has_value());
  CHECK(*c[1].value == doctest::Approx(2.5));
  CHECK(c[1].count == 4);
  for (auto& r : records) r.fde = {0.0, 0.0};
  for (const auto& b : error_vs_proximity(records, edges, 1)) {
    if (b.value) CHECK(*b.value == 0.0);
  }
}

TEST_CASE("interaction tagging") {
  SUBCASE("thresholds") {
    Agent a = follower(1, {0, 4});
    a.positions[4].y += 1.0;
    const Scene s = scene_with({a, follower(2, {0, 25})});
    const auto tags = tag_interactions(s);
    REQUIRE(tags.size() == 2);
    CHECK(tags[0].interacting);
    CHECK_FALSE(tags[1].interacting);
    InteractionThresholds strict;
    strict.d_max = 3.0;
    CHECK_FALSE(tag_interactions(s, strict)[0].interacting);
  }
  SUBCASE("deterministic and order-invariant") {
    auto scenes = corpus(synth::InteractionMode::dense, 30);
    std::mt19937_64 rng(1);
    for (Scene s : scenes) {
      const auto a = tag_interactions(s);
      std::shuffle(s.agents.begin(), s.agents.end(), rng);
      const auto b = tag_interactions(s);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].agent_id == b[i].agent_id);
        CHECK(a[i].interacting == b[i].interacting);
        CHECK(a[i].closest_approach == b[i].closest_approach);
        CHECK(a[i].closest_approach >= 0.0);
      }
    }
  }
}

TEST_CASE("dense corpus reaches half its closest-approach mass by 10 m") {
  const auto s = corpus(synth::InteractionMode::dense, 200);
  CHECK(cdf_at(closest_approach_cdf(s), 10.0) >= 0.5);
}
