#include <doctest.h>

#include <numbers>
#include <set>

#include "emarig/rig_graph.hpp"
#include "emarig/unit_synth.hpp"
#include "fixture_rig.hpp"
#include "support.hpp"

using namespace emarig;
using namespace emarig::test;

namespace {

AnimationUnit unit_of(double start, double end, std::size_t source = 0) {
  AnimationUnit u;
  u.start = start;
  u.end = end;
  u.source_index = source;
  for (int p = 0; p < 7; ++p) {
    u.first_positions.push_back(Vec3::Zero());
    u.last_positions.push_back(Vec3::Zero());
    u.first_velocities.push_back(Vec3::Zero());
    u.last_velocities.push_back(Vec3::Zero());
  }
  return u;
}

// Random instance with at most `slots` slots and `cands` candidates per slot.
std::pair<std::vector<AnimationUnit>, SynthesisRequest> random_instance(int slots, int cands) {
  const int labels = uniform_int(1, 3);
  std::vector<AnimationUnit> db;
  int tries = 0;
  while (true) {
    db = random_units(uniform_int(labels, labels * cands), labels);
    std::map<std::string, int> count;
    for (const auto& u : db) ++count[u.label];
    bool ok = true;
    for (const auto& [l, c] : count) ok = ok && c <= cands;
    if (ok || ++tries > 100) break;
  }
  // Make some candidates corpus neighbours of each other.
  SynthesisRequest req;
  const int n = uniform_int(1, slots);
  for (int k = 0; k < n; ++k) {
    const auto& u = db[static_cast<std::size_t>(uniform_int(0, static_cast<int>(db.size()) - 1))];
    req.items.push_back({u.label, uniform_int(0, 3) == 0 ? u.duration() : uniform(0.03, 0.4)});
  }
  req.w_target = uniform(0.1, 3.0);
  req.w_join = uniform(0.1, 3.0);
  return {db, req};
}

// A one-bone clip whose stretch follows `stretch` key by key.
AnimationClip stretch_clip(const std::vector<double>& stretch, double rate = 100.0) {
  AnimationClip clip;
  clip.rate_hz = rate;
  clip.armature = build_armature(parse_rig_graph("digraph{R->A;}"), {{"A", Vec3(1, 0, 0)}}, Vec3::Zero(), Vec3::Zero());
  for (std::size_t k = 0; k < stretch.size(); ++k) {
    clip.times.push_back(static_cast<double>(k) / rate);
    ClipFrame f;
    f.bones.push_back(BoneKey{Quat::Identity(), Vec3::Zero(), stretch[k]});
    clip.frames.push_back(f);
  }
  clip.duration = static_cast<double>(stretch.size()) / rate;
  return clip;
}

class PenalizedModel : public CostModel {
 public:
  PenalizedModel(std::size_t penalized, double extra) : penalized_(penalized), extra_(extra) {}
  double target(const AnimationUnit& u, double requested) const override {
    return CostModel::target(u, requested) + (u.source_index == penalized_ ? extra_ : 0.0);
  }

 private:
  std::size_t penalized_;
  double extra_;
};

}  // namespace

TEST_SUITE("unit_synth") {
  TEST_CASE("target cost") {
    CHECK(target_cost(unit_of(0, 0.2), 0.2) == 0.0);
    CHECK(target_cost(unit_of(0, 0.1), 0.2) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(target_cost(unit_of(0, 0.1), 0.2) == doctest::Approx(0.6931).epsilon(1e-4));
    for (int i = 0; i < 1000; ++i) {
      const double d = uniform(0.01, 2.0);
      const double r = uniform(0.01, 2.0);
      CHECK(std::abs(target_cost(unit_of(0, d), r) - target_cost(unit_of(0, r), d)) < 1e-15);
      CHECK(target_cost(unit_of(0, d), r) == doctest::Approx(oracle_target(unit_of(0, d), r)).epsilon(1e-15));
    }
  }

  TEST_CASE("join cost") {
    auto a = unit_of(0, 0.1, 3);
    auto b = unit_of(0.1, 0.2, 4);
    b.first_positions[2] = Vec3(5, 5, 5);
    CHECK(join_cost(a, b) == 0.0);  // corpus neighbours
    b.source_index = 9;
    b.first_positions[2] = Vec3::Zero();
    CHECK(join_cost(a, b) == 0.0);  // identical features
    b.first_positions[4] = Vec3(1, 0, 0);
    CHECK(join_cost(a, b) == 1.0);
    b.first_velocities[0] = Vec3(0, 3, 4);
    CHECK(join_cost(a, b, 0.01) == doctest::Approx(1.05).epsilon(1e-15));
    for (const auto& x : random_units(20, 3)) {
      for (const auto& y : random_units(5, 3)) {
        CHECK(join_cost(x, y) == doctest::Approx(oracle_join(x, y, 0.01)).epsilon(1e-13));
      }
    }
  }

  TEST_CASE("request parsing and validation") {
    const auto items = parse_request_items(" sil 0.1; a 0.25 ;t 0.05;");
    REQUIRE(items.size() == 3);
    CHECK(items[1].label == "a");
    CHECK(items[1].duration == 0.25);
    CHECK(error_code([] { parse_request_items(""); }) == "BadRequest");
    CHECK(error_code([] { parse_request_items("a"); }) == "BadRequest");
    SynthesisRequest r;
    CHECK(error_code([&] { r.validate(); }) == "BadRequest");
    r.items = {{"a", 0.0}};
    CHECK(error_code([&] { r.validate(); }) == "BadRequest");
    r.items = {{"zz", 0.1}};
    CHECK(error_code([&] { select_units(random_units(5, 2), r); }) == "NoCandidate");
  }

  TEST_CASE("single slot takes the best duration match") {
    std::vector<AnimationUnit> db{unit_of(0, 0.3, 0), unit_of(0.3, 0.42, 1), unit_of(0.42, 0.6, 2)};
    for (auto& u : db) u.label = "a";
    SynthesisRequest r;
    r.items = {{"a", 0.13}};
    const auto plan = select_units(db, r);
    REQUIRE(plan.chosen.size() == 1);
    CHECK(plan.chosen[0].unit == 1);
    CHECK(plan.chosen[0].warp == doctest::Approx(0.13 / 0.12));
  }

  TEST_CASE("DP equals brute-force enumeration") {
    for (int trial = 0; trial < 300; ++trial) {
      const auto [db, req] = random_instance(5, 5);
      const auto dp = select_units(db, req);
      const auto bf = brute_force_select(db, req);
      const auto ex = select_units_exhaustive(db, req);
      REQUIRE(dp.total == bf.total);
      REQUIRE(dp.source_sequence() == bf.sources);
      REQUIRE(ex.total == dp.total);
      REQUIRE(ex.source_sequence() == dp.source_sequence());
      const auto again = evaluate_plan(db, req, [&] {
        std::vector<std::size_t> u;
        for (const auto& c : dp.chosen) u.push_back(c.unit);
        return u;
      }());
      REQUIRE(again.total == dp.total);
      double t = 0.0, j = 0.0;
      for (double x : dp.target_costs) t += x;
      for (double x : dp.join_costs) j += x;
      CHECK(std::abs(dp.total - (req.w_target * t + req.w_join * j)) < 1e-12);
      for (const auto& c : dp.chosen) CHECK(c.warp > 0.0);
    }
  }

  TEST_CASE("ties go to the lexicographically smallest source sequence") {
    std::vector<AnimationUnit> db{unit_of(0, 0.1, 0), unit_of(0.5, 0.6, 1), unit_of(1.0, 1.1, 2)};
    for (auto& u : db) u.label = "a";
    SynthesisRequest r;
    r.items = {{"a", 0.1}, {"a", 0.1}};
    const auto plan = select_units(db, r);
    // Every join is zero: identical features everywhere.
    CHECK(plan.source_sequence() == std::vector<std::size_t>{0, 0});
    CHECK(plan.total == brute_force_select(db, r).total);
  }

  TEST_CASE("scaling both weights keeps the argmin") {
    for (int trial = 0; trial < 100; ++trial) {
      auto [db, req] = random_instance(5, 5);
      const auto base = select_units(db, req);
      for (double c : {0.25, 2.0, 8.0}) {
        auto scaled = req;
        scaled.w_target *= c;
        scaled.w_join *= c;
        CHECK(select_units(db, scaled).source_sequence() == base.source_sequence());
      }
      auto scaled = req;
      scaled.w_target *= 3.0;
      scaled.w_join *= 3.0;
      const auto p3 = select_units(db, scaled);
      std::vector<std::size_t> units;
      for (const auto& u : p3.chosen) units.push_back(u.unit);
      CHECK(std::abs(evaluate_plan(db, req, units).total - base.total) <= 1e-12 * (1 + base.total));
    }
  }

  TEST_CASE("raising a rejected candidate's cost keeps it rejected") {
    for (int trial = 0; trial < 100; ++trial) {
      const auto [db, req] = random_instance(5, 5);
      const auto base = select_units(db, req);
      std::set<std::size_t> used;
      for (const auto& c : base.chosen) used.insert(c.source_index);
      for (std::size_t u = 0; u < db.size(); ++u) {
        if (used.count(u)) continue;
        const auto plan = select_units(db, req, PenalizedModel(u, uniform(0.0, 2.0)));
        for (const auto& c : plan.chosen) CHECK(c.source_index != u);
      }
    }
  }

  TEST_CASE("exact reconstruction of the corpus") {
    const auto r = fixture_rig();
    const auto clip = bake(r.prepared, r.rig, IkParams{});
    const auto tier = merge_tiers(r.fx.tiers, std::vector<double>{0.0, r.prepared[0].duration()});
    const auto db = build_unit_db(clip, tier);
    SynthesisRequest req;
    for (const auto& s : tier.segments) req.items.push_back({s.label, s.end - s.start});
    const auto plan = select_units(db, req);
    REQUIRE(plan.chosen.size() == db.size());
    for (std::size_t i = 0; i < db.size(); ++i) CHECK(plan.chosen[i].source_index == i);
    CHECK(plan.total == 0.0);
    for (double j : plan.join_costs) CHECK(j == 0.0);
    for (double t : plan.target_costs) CHECK(t == 0.0);
  }

  TEST_CASE("render: one unit at warp 1 is a slice of the source") {
    std::vector<double> s;
    for (int k = 0; k < 40; ++k) s.push_back(1.0 + 0.02 * k);
    const auto clip = stretch_clip(s);
    const auto db = build_unit_db(clip, SegmentTier{{{0.1, 0.3, "a"}}});
    SynthesisRequest req;
    req.items = {{"a", db[0].duration()}};
    const auto plan = select_units(db, req);
    const auto out = render_plan(plan, clip, req.blend_window);
    REQUIRE(out.key_count() == 20);
    CHECK(std::abs(out.duration - 0.2) < 1e-9);
    for (std::size_t k = 0; k < out.key_count(); ++k) {
      CHECK(std::abs(out.times[k] - static_cast<double>(k) / 100.0) < 1e-12);
      CHECK(out.frames[k].bones[0].stretch == clip.frames[10 + k].bones[0].stretch);
      CHECK(out.frames[k].bones[0].head == clip.frames[10 + k].bones[0].head);
      CHECK(out.frames[k].bones[0].rotation.coeffs() == clip.frames[10 + k].bones[0].rotation.coeffs());
    }
  }

  TEST_CASE("render: warping 0.1 s to 0.2 s doubles key times") {
    std::vector<double> s;
    for (int k = 0; k < 30; ++k) s.push_back(1.0 + 0.01 * k * k);
    const auto clip = stretch_clip(s);
    const auto db = build_unit_db(clip, SegmentTier{{{0.0, 0.1, "a"}}});
    SynthesisRequest req;
    req.items = {{"a", 0.2}};
    const auto out = render_plan(select_units(db, req), clip);
    REQUIRE(out.key_count() == 10);
    for (std::size_t k = 0; k < 10; ++k) {
      CHECK(std::abs(out.times[k] - 2.0 * clip.times[k]) < 1e-12);
      CHECK(out.frames[k].bones[0].stretch == clip.frames[k].bones[0].stretch);
    }
    CHECK(std::abs(out.duration - 0.2) < 1e-12);
  }

  TEST_CASE("render: durations add up") {
    const auto r = fixture_rig();
    const auto clip = bake(r.prepared, r.rig, IkParams{});
    const auto tier = merge_tiers(r.fx.tiers, std::vector<double>{0.0, r.prepared[0].duration()});
    const auto db = build_unit_db(clip, tier);
    for (int trial = 0; trial < 30; ++trial) {
      SynthesisRequest req;
      double total = 0.0;
      for (int k = 0; k < uniform_int(1, 6); ++k) {
        const auto& u = db[static_cast<std::size_t>(uniform_int(0, static_cast<int>(db.size()) - 1))];
        const double d = uniform(0.02, 0.5);
        req.items.push_back({u.label, d});
        total += d;
      }
      const auto out = render_plan(select_units(db, req), clip, req.blend_window);
      CHECK(std::abs(out.duration - total) < 1e-9);
      CHECK(out.times.front() == 0.0);
      for (std::size_t k = 1; k < out.key_count(); ++k) REQUIRE(out.times[k] > out.times[k - 1]);
      CHECK(out.times.back() < total);
      out.validate();
    }
  }

  TEST_CASE("render: a junction between matching poses stays continuous") {
    // Keys 0..10 rise 1.0 -> 1.5, 10..20 fall to 0.8, 20..30 fall 1.5 -> 1.0.
    std::vector<double> s;
    for (int k = 0; k <= 10; ++k) s.push_back(1.0 + 0.05 * k);
    for (int k = 11; k < 20; ++k) s.push_back(1.5 - 0.7 * (k - 10) / 10.0);
    for (int k = 20; k < 31; ++k) s.push_back(1.5 - 0.05 * (k - 20));
    const auto clip = stretch_clip(s);
    const auto db = build_unit_db(clip, SegmentTier{{{0.0, 0.1, "a"}, {0.1, 0.2, "x"}, {0.2, 0.3, "b"}}});
    CHECK(db[0].last_positions[0] == db[2].first_positions[0]);
    SynthesisRequest req;
    req.items = {{"a", 0.1}, {"b", 0.1}};
    const auto plan = select_units(db, req);
    CHECK(plan.source_sequence() == std::vector<std::size_t>{0, 2});
    const auto out = render_plan(plan, clip, 0.04);
    double within = 0.0;
    for (int k = 1; k <= 10; ++k) within = std::max(within, std::abs(s[k] - s[k - 1]));
    for (int k = 21; k <= 30; ++k) within = std::max(within, std::abs(s[k] - s[k - 1]));
    double jump = 0.0;
    for (std::size_t k = 1; k < out.key_count(); ++k) {
      jump = std::max(jump, std::abs(out.frames[k].bones[0].stretch - out.frames[k - 1].bones[0].stretch));
    }
    CHECK(jump <= within + 1e-12);
  }
}
