#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <set>

#include "ohda/detector.hpp"
#include "ohda/scene.hpp"

using namespace ohda;

namespace {

DetectorConfig small_config() {
  DetectorConfig c;
  c.num_seeds = 16;
  c.group_size = 8;
  c.point_hidden = 8;
  c.point_features = 16;
  c.feature_dim = 12;
  c.head_hidden = 12;
  c.disc_hidden = 6;
  c.backbone_dropout = 0.2;
  return c;
}

std::vector<Vec3> scene_points(std::uint64_t seed) {
  const DomainSpec spec = default_target_spec();
  return gen_scene(spec, build_object_bank(spec, 1), seed).points;
}

}  // namespace

TEST_CASE("fps") {
  std::vector<Vec3> line;
  for (int i = 0; i <= 10; ++i) line.push_back({static_cast<double>(i), 0, 0});
  CHECK(fps(line, 3) == std::vector<std::size_t>{0, 10, 5});
  CHECK(fps(line, 0).empty());
  CHECK_THROWS(fps(line, 12));

  // Duplicates tie at distance 0 and the lower index wins.
  const std::vector<Vec3> dup{{0, 0, 0}, {1, 0, 0}, {1, 0, 0}};
  CHECK(fps(dup, 2) == std::vector<std::size_t>{0, 1});

  const auto pts = scene_points(4);
  const auto chosen = fps(pts, 32);
  CHECK(std::set<std::size_t>(chosen.begin(), chosen.end()).size() == 32);
}

TEST_CASE("group_neighbors pads with the seed and subsamples by stride") {
  const std::vector<Vec3> pts{{0, 0, 0}, {0.1, 0, 0}, {5, 0, 0}};
  CHECK(group_neighbors(pts, 0, 0.5, 4) == std::vector<std::size_t>{0, 1, 0, 0});
  CHECK(group_neighbors(pts, 2, 0.5, 3) == std::vector<std::size_t>{2, 2, 2});

  std::vector<Vec3> dense;
  for (int i = 0; i < 10; ++i) dense.push_back({0.01 * i, 0, 0});
  CHECK(group_neighbors(dense, 0, 1.0, 5) == std::vector<std::size_t>{0, 2, 4, 6, 8});
}

TEST_CASE("head shapes and decoded probabilities") {
  const DetectorModel m(small_config(), 1);
  const auto pts = scene_points(2);
  const DetectorPass pass = m.forward(pts, {.mode = nn::Mode::eval});
  CHECK(pass.size() == 16);
  CHECK(pass.heads.rows() == 16);
  CHECK(pass.heads.cols() == m.layout().width());
  CHECK(pass.features.cols() == 12);
  for (const auto& p : m.decode(pass)) {
    CHECK(std::accumulate(p.class_probs.begin(), p.class_probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.objectness >= 0.0);
    CHECK(p.objectness <= 1.0);
    CHECK(p.box.valid());
  }

  const std::vector<Vec3> few{{0, 0, 0}, {0.1, 0.2, 0}, {0.3, 0, 0.1}};
  CHECK(m.forward(few).size() == 3);
}

TEST_CASE("translation moves boxes but leaves head outputs unchanged") {
  DetectorModel m(small_config(), 3);
  m.set_mode(nn::Mode::eval);
  const auto pts = scene_points(5);
  std::vector<Vec3> moved;
  const Vec3 t{2.0, -1.0, 0.5};
  for (const auto& p : pts) moved.push_back(p + t);
  const DetectorPass a = m.forward(pts), b = m.forward(moved);
  CHECK(a.seed_indices == b.seed_indices);
  for (std::size_t i = 0; i < a.heads.size(); ++i) CHECK(a.heads[i] == doctest::Approx(b.heads[i]).epsilon(1e-9));
  const auto da = m.decode(a), db = m.decode(b);
  for (std::size_t k = 0; k < da.size(); ++k) {
    CHECK(distance(da[k].box.center + t, db[k].box.center) < 1e-9);
  }
}

TEST_CASE("inference") {
  DetectorModel m(small_config(), 4);
  const auto pts = scene_points(6);

  SUBCASE("deterministic and independent of train mode") {
    const auto a = infer(m, pts);
    m.set_mode(nn::Mode::train);
    CHECK(infer(m, pts) == a);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].score == doctest::Approx(a[i].obj_score * a[i].cls_score));
  }
  SUBCASE("strongly negative objectness yields no detections") {
    auto& last = std::get<nn::Dense>(m.decoder.layers().back());
    for (double& w : last.weight) w = 0.0;
    last.bias[0] = 30.0;
    last.bias[1] = -30.0;
    CHECK(infer(m, pts).empty());
  }
  SUBCASE("perturbation at rate 0 reproduces plain inference") {
    const auto sets = perturbed_infer(m, pts, 0.0, 3, 9);
    REQUIRE(sets.size() == 3);
    for (const auto& s : sets) CHECK(s == infer(m, pts));
    const auto noisy = perturbed_infer(m, pts, 0.5, 2, 9);
    CHECK(noisy == perturbed_infer(m, pts, 0.5, 2, 9));
  }
}

TEST_CASE("max pooling routes the gradient to one duplicate") {
  DetectorConfig c = small_config();
  c.backbone_dropout = 0.0;
  c.num_seeds = 1;
  c.group_size = 4;
  DetectorModel m(c, 5);
  // Two identical points give identical rows; ties go to the first row.
  const std::vector<Vec3> pts{{0, 0, 0}, {0.2, 0, 0}, {0.2, 0, 0}};
  DetectorPass pass = m.forward(pts);
  for (std::size_t ch = 0; ch < 16; ++ch) CHECK(pass.pool_argmax[ch] != 2);
  m.zero_grad();
  m.backward(pass, nn::Tensor::matrix(1, 3, 1.0), nn::Tensor::matrix(1, m.layout().width(), 1.0));
  bool any = false;
  for (const auto& p : m.backbone_parameters()) {
    for (double g : p.grad) any = any || g != 0.0;
  }
  CHECK(any);
}

TEST_CASE("checkpoint round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "ohda_unit_det";
  std::filesystem::remove_all(dir);
  DetectorConfig c = small_config();
  c.mean_sizes = {{1, 1, 1}, {0.5, 0.5, 0.9}, {2, 1, 0.6}, {0.8, 0.8, 1.2}};
  DetectorModel m(c, 6);
  auto params = m.parameters();
  nn::round_to_f32(params);
  m.save(dir / "det", 12);
  const DetectorModel back = DetectorModel::load(dir / "det");
  CHECK(back.manifest() == m.manifest());
  const auto pts = scene_points(7);
  CHECK(infer(back, pts) == infer(m, pts));
}
