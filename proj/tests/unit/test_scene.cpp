#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ohda/scene.hpp"

using namespace ohda;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ohda_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double mean_volume(const DomainSpec& spec, const ObjectBank& bank, int cls, int scenes) {
  double sum = 0;
  int n = 0;
  for (int s = 0; s < scenes; ++s) {
    for (const auto& o : gen_scene(spec, bank, 1000 + static_cast<std::uint64_t>(s)).objects) {
      if (o.class_id == cls) sum += volume(o.box), ++n;
    }
  }
  return sum / n;
}

}  // namespace

TEST_CASE("object bank") {
  const DomainSpec spec = default_source_spec();
  const ObjectBank a = build_object_bank(spec, 4), b = build_object_bank(spec, 4);
  REQUIRE(a.num_classes() == 4);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(a.prototypes[c].size() >= 8);
    for (std::size_t i = 0; i < a.prototypes[c].size(); ++i) {
      const auto& p = a.prototypes[c][i];
      CHECK(p.points == b.prototypes[c][i].points);
      for (const auto& q : p.points) CHECK(p.box.contains(q, 1e-9));
    }
  }
}

TEST_CASE("generated scenes satisfy construction invariants") {
  for (const DomainSpec& spec : {default_source_spec(), default_target_spec()}) {
    const ObjectBank bank = build_object_bank(spec, 1);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Scene s = gen_scene(spec, bank, seed);
      CHECK(s == gen_scene(spec, bank, seed));
      CHECK(s.objects.size() >= 3);
      CHECK(s.objects.size() <= 20);
      for (std::size_t i = 0; i < s.objects.size(); ++i) {
        CHECK(s.room_bounds.contains(s.objects[i].box, 1e-9));
        CHECK(s.objects[i].box.min_corner().z == doctest::Approx(s.floor_z).epsilon(1e-6));
        for (std::size_t j = i + 1; j < s.objects.size(); ++j) CHECK(iou(s.objects[i].box, s.objects[j].box) <= 0.01);
      }
    }
  }
}

TEST_CASE("noise-free scenes: every point lies on an object or the floor") {
  DomainSpec spec = default_source_spec();
  spec.noise_sigma = 0;
  spec.dropout = 0;
  spec.clutter_points = 0;
  const ObjectBank bank = build_object_bank(spec, 2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = gen_scene(spec, bank, seed);
    std::vector<bool> owned(s.points.size(), false);
    for (const auto& o : s.objects) {
      for (auto i : o.point_indices) {
        owned[i] = true;
        CHECK(o.box.contains(s.points[i], 1e-9));
      }
    }
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      if (!owned[i]) CHECK(s.points[i].z == s.floor_z);
    }
  }
}

TEST_CASE("target size scaling shows in mean box volume") {
  // Upright boxes only: a free yaw inflates the axis-aligned extents on its own.
  const DomainSpec src = default_source_spec();
  DomainSpec tgt = default_target_spec();
  tgt.free_yaw = false;
  const double vs = mean_volume(src, build_object_bank(src, 3), 0, 100);
  const double vt = mean_volume(tgt, build_object_bank(tgt, 3), 0, 100);
  CHECK(vt / vs == doctest::Approx(1.2 * 1.2 * 1.2).epsilon(0.10));
}

TEST_CASE("scene files round-trip and reject truncation") {
  const fs::path dir = temp_dir("scenes");
  const DomainSpec spec = default_target_spec();
  const Dataset ds = make_dataset(spec, 5, 6, 3);
  write_dataset(ds, dir / "ds");
  const Dataset back = read_dataset(dir / "ds");
  CHECK(back.scenes == ds.scenes);
  CHECK(back.class_names == ds.class_names);
  CHECK(back.bank_seed == 5);
  CHECK(back.spec.get<DomainSpec>().clutter_points == spec.clutter_points);

  // Drop the last line: the reader must fail rather than return two scenes.
  std::ifstream in(dir / "ds" / "scenes.jsonl");
  std::string line, kept;
  for (int i = 0; i < 2 && std::getline(in, line); ++i) kept += line + "\n";
  in.close();
  std::ofstream(dir / "ds" / "scenes.jsonl", std::ios::trunc) << kept;
  CHECK_THROWS_AS(read_dataset(dir / "ds"), ParseError);

  // A line cut mid-record is a parse error too.
  std::ofstream(dir / "ds" / "scenes.jsonl", std::ios::trunc) << kept.substr(0, kept.size() / 3);
  CHECK_THROWS_AS(read_dataset(dir / "ds"), ParseError);

  write_dataset(Dataset{ds.class_names, ds.frequencies, ds.spec, 0, {}}, dir / "empty");
  CHECK(read_dataset(dir / "empty").scenes.empty());
}

TEST_CASE("domain label spaces match") {
  CHECK(default_source_spec().class_names() == default_target_spec().class_names());
}
