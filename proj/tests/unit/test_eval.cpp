#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ohda/eval.hpp"
#include "oracles.hpp"

using namespace ohda;

namespace {

Detection det_box(const Aabb& box, int cls, double score) {
  Detection d;
  d.box = box;
  d.class_id = cls;
  d.obj_score = score;
  d.cls_score = 1.0;
  d.score = score;
  return d;
}

const Aabb kUnit{{0, 0, 0}, {1, 1, 1}};
const Aabb kFar{{5, 0, 0}, {1, 1, 1}};
const Aabb kMiss{{20, 0, 0}, {1, 1, 1}};

// Random scenes with GT boxes and jittered, duplicated and spurious detections.
std::vector<oracle::RefScene> random_scenes(std::mt19937_64& rng, int n, int classes) {
  std::uniform_real_distribution<double> u(0, 1), jit(-0.25, 0.25);
  std::uniform_int_distribution<int> count(0, 6), cls(0, classes - 1);
  std::vector<oracle::RefScene> out(static_cast<std::size_t>(n));
  for (auto& s : out) {
    const int ng = count(rng);
    for (int g = 0; g < ng; ++g) s.gt.push_back({oracle::random_box(rng, 3.0, 0.3, 1.2), cls(rng)});
    for (const auto& g : s.gt) {
      const int copies = count(rng) % 3;
      for (int c = 0; c < copies; ++c) {
        Aabb b = g.box;
        b.center += Vec3{jit(rng), jit(rng), jit(rng)};
        // Coarse scores force ties that exercise the scene/index tie-break.
        s.dets.push_back({b, u(rng) < 0.8 ? g.cls : cls(rng), std::round(u(rng) * 10) / 10});
      }
    }
    const int spurious = count(rng) % 3;
    for (int i = 0; i < spurious; ++i) s.dets.push_back({oracle::random_box(rng, 3.0), cls(rng), std::round(u(rng) * 10) / 10});
  }
  return out;
}

std::vector<SceneEval> to_eval(const std::vector<oracle::RefScene>& scenes) {
  std::vector<SceneEval> out;
  for (const auto& s : scenes) {
    SceneEval e;
    for (const auto& d : s.dets) e.detections.push_back(det_box(d.box, d.cls, d.score));
    for (const auto& g : s.gt) e.gt.push_back({g.box, g.cls});
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

TEST_CASE("AP examples") {
  const SceneEval perfect{{det_box(kUnit, 0, 0.9)}, {{kUnit, 0}}};
  CHECK(*ap_per_class(std::vector<SceneEval>{perfect}, 0, 0.25) == 1.0);

  const SceneEval none{{}, {{kUnit, 0}}};
  CHECK(*ap_per_class(std::vector<SceneEval>{none}, 0, 0.25) == 0.0);

  const SceneEval no_gt{{det_box(kUnit, 0, 0.9)}, {}};
  CHECK_FALSE(ap_per_class(std::vector<SceneEval>{no_gt}, 0, 0.25));

  // Two GT, ranked TP, FP, TP.
  const SceneEval mixed{{det_box(kUnit, 0, 0.9), det_box(kMiss, 0, 0.8), det_box(kFar, 0, 0.7)}, {{kUnit, 0}, {kFar, 0}}};
  CHECK(*ap_per_class(std::vector<SceneEval>{mixed}, 0, 0.25) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("duplicates: one TP per ground-truth box") {
  const SceneEval dup{{det_box(kUnit, 0, 0.9), det_box(kUnit, 0, 0.8)}, {{kUnit, 0}}};
  // TP then FP: recall reaches 1 at precision 1.
  CHECK(*ap_per_class(std::vector<SceneEval>{dup}, 0, 0.5) == 1.0);
  const SceneEval two{{det_box(kUnit, 0, 0.9), det_box(kUnit, 0, 0.8)}, {{kUnit, 0}, {kFar, 0}}};
  CHECK(*ap_per_class(std::vector<SceneEval>{two}, 0, 0.5) == 0.5);
}

TEST_CASE("AP agrees with the brute-force reference") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ref = random_scenes(rng, 8, 3);
    const auto ev = to_eval(ref);
    for (int c = 0; c < 3; ++c) {
      for (double t : {0.25, 0.5}) {
        const auto got = ap_per_class(ev, c, t);
        const auto want = oracle::ap_reference(ref, c, t);
        REQUIRE(got.has_value() == want.has_value());
        if (got) CHECK(std::abs(*got - *want) <= 1e-9);
      }
    }
  }
}

TEST_CASE("mAP over classes with ground truth") {
  const std::vector<std::string> names{"a", "b", "c"};
  const std::vector<SceneEval> ev{{{det_box(kUnit, 0, 0.9)}, {{kUnit, 0}, {kFar, 1}}}};
  const MetricsReport r = evaluate_detections(ev, names);
  CHECK(r.map_at(0.25) == 0.5);  // class a: 1, class b: 0, class c excluded
  CHECK_FALSE(r.classes[2].ap[0]);
  CHECK(r.classes[1].num_gt == 1);
  CHECK(r.classes[0].num_det == 1);
  CHECK_THROWS(r.map_at(0.7));

  // Ground truth fed back as detections.
  std::mt19937_64 rng(2);
  auto scenes = random_scenes(rng, 10, 3);
  std::vector<SceneEval> oracle_dets;
  for (const auto& s : scenes) {
    SceneEval e;
    for (const auto& g : s.gt) {
      e.detections.push_back(det_box(g.box, g.cls, 1.0));
      e.gt.push_back({g.box, g.cls});
    }
    oracle_dets.push_back(e);
  }
  const MetricsReport perfect = evaluate_detections(oracle_dets, names);
  CHECK(perfect.map_at(0.25) == 1.0);
  CHECK(perfect.map_at(0.5) == 1.0);

  for (auto& e : oracle_dets) e.detections.clear();
  CHECK(evaluate_detections(oracle_dets, names).map_at(0.25) == 0.0);
}

TEST_CASE("mAP is invariant to scene order when scores are distinct") {
  std::mt19937_64 rng(5);
  auto ref = random_scenes(rng, 12, 3);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& s : ref) {
    for (auto& d : s.dets) d.score = u(rng);
  }
  auto ev = to_eval(ref);
  const std::vector<std::string> names{"a", "b", "c"};
  const double before = evaluate_detections(ev, names).map_at(0.25);
  std::reverse(ev.begin(), ev.end());
  CHECK(evaluate_detections(ev, names).map_at(0.25) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("turning a false positive into a true positive never lowers AP") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    auto ref = random_scenes(rng, 3, 1);
    std::size_t s = 0;
    while (s < ref.size() && ref[s].gt.empty()) ++s;
    if (s == ref.size()) continue;
    // Add an unmatched GT and one far-off detection for it, then move the detection onto it.
    Aabb extra = kUnit;
    extra.center = {40.0 + trial, 0, 0};
    ref[s].gt.push_back({extra, 0});
    ref[s].dets.push_back({kMiss, 0, 0.55});
    const double fp = *ap_per_class(to_eval(ref), 0, 0.25);
    ref[s].dets.back().box = extra;
    const double tp = *ap_per_class(to_eval(ref), 0, 0.25);
    CHECK(tp >= fp);
  }
}

TEST_CASE("report JSON round-trip") {
  std::mt19937_64 rng(3);
  const std::vector<std::string> names{"bed", "chair", "sofa", "table"};
  const MetricsReport r = evaluate_detections(to_eval(random_scenes(rng, 10, 3)), names);
  const json j = report_to_json(r, {{"split", "unit"}});
  for (const auto& n : names) {
    REQUIRE(j.at("classes").contains(n));
    CHECK(j["classes"][n].contains("ap25"));
  }
  CHECK(j["classes"]["table"]["ap25"].is_null());
  CHECK(std::isfinite(j["map25"].get<double>()));
  const MetricsReport back = report_from_json(j);
  CHECK(back.map == r.map);
  CHECK(back.classes.size() == r.classes.size());
  for (std::size_t c = 0; c < r.classes.size(); ++c) CHECK(back.classes[c].ap == r.classes[c].ap);

  const auto path = std::filesystem::temp_directory_path() / "ohda_unit_report.json";
  write_report(r, path);
  std::ifstream in(path);
  CHECK(report_from_json(json::parse(in)).map == r.map);
}
