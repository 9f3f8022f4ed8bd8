#include "jvae/inference.hpp"
#include "jvae/synth.hpp"
#include "support.hpp"

#include <doctest.h>

#include <sstream>

using namespace jvae;
using namespace jvae::inference;
using model::Variant;
using testing::line_scene;
using testing::random_model;

TEST_CASE("zero-initialised model predicts constant positions") {
  const auto m = model::build_variant(Variant::joint_beta_cvae, testing::tiny_hyper());
  const Scene s = line_scene(3);
  const auto p = predict(s, m, 5, 1);
  REQUIRE(p.agents.size() == s.agents.size());
  for (const Agent& a : s.agents) {
    const auto& ap = p.of(a.id);
    REQUIRE(ap.samples.size() == 5);
    for (const auto& traj : ap.samples) {
      REQUIRE(traj.size() == std::size_t(s.pred_len));
      for (const Vec2& q : traj) CHECK((q - s.current(a)).norm() < 1e-12);
    }
  }
}

TEST_CASE("prediction is deterministic and N = 0 is rejected") {
  const auto m = random_model(Variant::joint_beta_cvae, 3);
  const Scene s = line_scene(3);
  CHECK(format_prediction_line(predict(s, m, 8, 42)) == format_prediction_line(predict(s, m, 8, 42)));
  CHECK(format_prediction_line(predict(s, m, 8, 42)) != format_prediction_line(predict(s, m, 8, 43)));
  CHECK_THROWS_AS(predict(s, m, 0, 1), std::invalid_argument);
}

TEST_CASE("forced zero prior variance collapses the samples") {
  const auto m = random_model(Variant::joint_beta_cvae, 3);
  const Scene s = line_scene(2);
  PredictOptions o;
  o.zero_prior_variance = true;
  const auto p = predict(s, m, 6, 9, o);
  for (const auto& ap : p.agents) {
    for (const auto& traj : ap.samples) CHECK(traj == ap.samples.front());
  }
}

TEST_CASE("a larger N only appends samples") {
  const auto m = random_model(Variant::joint_beta_cvae, 8);
  const Scene s = line_scene(3);
  const auto small = predict(s, m, 4, 77);
  const auto large = predict(s, m, 11, 77);
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) CHECK(small.agents[i].samples[k] == large.agents[i].samples[k]);
  }
}

TEST_CASE("sampling never reads ground-truth futures") {
  const auto m = random_model(Variant::joint_beta_cvae, 8);
  const Scene s = line_scene(3);
  Scene altered = s;
  for (auto& a : altered.agents) {
    for (std::size_t t = std::size_t(s.obs_len); t < a.positions.size(); ++t) a.positions[t] += Vec2{5.0, -3.0};
  }
  const auto a = predict(s, m, 5, 2);
  const auto b = predict(altered, m, 5, 2);
  for (std::size_t i = 0; i < s.agents.size(); ++i) CHECK(a.agents[i].samples == b.agents[i].samples);
}

TEST_CASE("predictions come back in the input frame and order") {
  const auto m = random_model(Variant::joint_beta_cvae, 8);
  Scene s = line_scene(3);
  const auto ref = predict(s, m, 3, 2);
  // Rigidly move and shuffle the input: samples move with it.
  Scene moved = s;
  const double c = std::cos(0.7), sn = std::sin(0.7);
  for (auto& a : moved.agents) {
    for (auto& p : a.positions) p = Vec2{c * p.x - sn * p.y + 3.0, sn * p.x + c * p.y - 8.0};
  }
  std::swap(moved.agents[1], moved.agents[3]);
  const auto out = predict(moved, m, 3, 2);
  CHECK(out.agents[1].agent_id == moved.agents[1].id);
  for (const Agent& a : s.agents) {
    const auto& r = ref.of(a.id).samples;
    const auto& o = out.of(a.id).samples;
    for (std::size_t k = 0; k < r.size(); ++k) {
      for (std::size_t t = 0; t < r[k].size(); ++t) {
        const Vec2 want{c * r[k][t].x - sn * r[k][t].y + 3.0, sn * r[k][t].x + c * r[k][t].y - 8.0};
        CHECK((o[k][t] - want).norm() < 1e-9);
      }
    }
  }
}

TEST_CASE("latents are kept on request") {
  const auto m = random_model(Variant::beta_cvae, 8);
  PredictOptions o;
  o.keep_latents = true;
  const auto p = predict(line_scene(1), m, 3, 2, o);
  for (const auto& ap : p.agents) {
    REQUIRE(ap.latents.size() == 3);
    CHECK(ap.latents[0].size() == m.hyper.latent);
  }
}

TEST_CASE("energy distance") {
  const std::vector<Vec2> a = {{0, 0}, {1, 0}, {0, 1}};
  CHECK(energy_distance(a, a) == 0.0);
  const std::vector<Vec2> b = {{5, 5}, {6, 5}, {5, 6}};
  CHECK(energy_distance(a, b) > 0.0);
  CHECK(energy_distance(a, b) == doctest::Approx(energy_distance(b, a)));
}

TEST_CASE("order sensitivity") {
  SUBCASE("a single agent has a single ordering") {
    const auto m = random_model(Variant::joint_beta_cvae, 8);
    CHECK(order_sensitivity(line_scene(0), m, 10, 1).mean_shift == 0.0);
  }
  SUBCASE("an untrained zero model is order-invariant") {
    const auto m = model::build_variant(Variant::joint_beta_cvae, testing::tiny_hyper());
    const auto r = order_sensitivity(line_scene(4), m, 10, 1, 4);
    CHECK(r.orderings == 4);
    CHECK(r.mean_shift == 0.0);
  }
  SUBCASE("random models report finite non-negative shifts") {
    // Permuting agents reassigns noise draws, so even an independent model
    // shows a finite-sample shift.
    const Scene s = line_scene(4);
    for (auto v : {Variant::beta_cvae, Variant::joint_beta_cvae}) {
      const auto r = order_sensitivity(s, random_model(v, 8), 10, 1, 3);
      CHECK(std::isfinite(r.mean_shift));
      CHECK(r.mean_shift >= 0.0);
      CHECK(r.per_ordering.size() == 3);
    }
  }
}
