#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "ohda/losses.hpp"

using namespace ohda;

namespace {

SceneObject object(Vec3 center, Vec3 size, int cls) { return SceneObject{cls, Aabb{center, size}, {}}; }

DetectorConfig tiny_config() {
  DetectorConfig c;
  c.num_seeds = 8;
  c.group_size = 8;
  c.point_hidden = 6;
  c.point_features = 8;
  c.feature_dim = 8;
  c.head_hidden = 8;
  c.disc_hidden = 4;
  c.mean_sizes.assign(4, Vec3{1, 1, 1});
  return c;
}

std::vector<Vec3> grid_points() {
  std::vector<Vec3> pts;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) pts.push_back({0.4 * i, 0.4 * j, 0.1 * ((i + j) % 3)});
  }
  return pts;
}

// Rewrites the decoder's last layer: zero offsets and log-sizes, confident
// objectness and class `cls`.
void force_heads(DetectorModel& m, int cls, double iou_logit) {
  auto& last = std::get<nn::Dense>(m.decoder.layers().back());
  std::fill(last.weight.begin(), last.weight.end(), 0.0);
  std::fill(last.bias.begin(), last.bias.end(), 0.0);
  const HeadLayout lay = m.layout();
  last.bias[lay.cls() + static_cast<std::size_t>(cls)] = 50.0;
  last.bias[lay.objectness() + 1] = 50.0;
  last.bias[lay.iou()] = iou_logit;
}

}  // namespace

TEST_CASE("target assignment") {
  const std::vector<SceneObject> gt{object({0, 0, 0}, {1, 1, 1}, 0), object({3, 0, 0}, {1, 1, 1}, 1)};
  const std::vector<Vec3> voted{{0.1, 0, 0}, {0.5, 0, 0}, {1.5, 0, 0}, {10, 0, 0}};
  const std::vector<Vec3> seeds{{0.2, 0, 0}, {0.6, 0, 0}, {3.2, 0, 0}, {10, 0, 0}};
  const Assignment a = assign_targets(voted, seeds, gt);
  CHECK(a.positivity[0] == Positivity::positive);
  CHECK(a.positivity[1] == Positivity::ignored);
  CHECK(a.positivity[2] == Positivity::negative);
  CHECK(a.positivity[3] == Positivity::negative);
  CHECK(*a.gt_index[0] == 0);
  CHECK(*a.gt_index[3] == 1);
  REQUIRE(a.vote_target[0]);
  CHECK(*a.vote_target[0] == Vec3{0, 0, 0});
  CHECK_FALSE(a.vote_target[1]);
  CHECK(*a.vote_target[2] == Vec3{3, 0, 0});

  // Equidistant GT: the lower index wins.
  const Assignment tie = assign_targets(std::vector<Vec3>{{1.5, 0, 0}}, std::vector<Vec3>{{1.5, 0, 0}}, gt);
  CHECK(*tie.gt_index[0] == 0);

  const Assignment none = assign_targets(voted, seeds, std::vector<SceneObject>{});
  for (auto p : none.positivity) CHECK(p == Positivity::negative);
  for (const auto& g : none.gt_index) CHECK_FALSE(g);
}

TEST_CASE("supervised loss of a perfect prediction is near zero") {
  DetectorModel m(tiny_config(), 1);
  m.set_mode(nn::Mode::eval);
  const auto pts = grid_points();
  // Zero the vote head output so voted centers equal the seeds.
  auto& vlast = std::get<nn::Dense>(m.vote_head.layers().back());
  std::fill(vlast.weight.begin(), vlast.weight.end(), 0.0);
  force_heads(m, 2, 50.0);
  const DetectorPass pass = m.forward(pts);

  // One unit box per seed, centered on it; an IoU target of 1 for every positive.
  std::vector<SceneObject> gt;
  for (const auto& s : pass.seeds) gt.push_back(object(s, {1, 1, 1}, 2));
  SupervisedTargets targets = supervised_targets(m, pass, gt);
  for (auto& t : targets.iou_target) t = 1.0;
  LossWeights w;
  const auto loss = supervised_loss(m, pass, gt, targets, w);
  CHECK(loss.report.total < 1e-12);
  CHECK(loss.report.center == 0.0);
  CHECK(loss.report.size == 0.0);
}

TEST_CASE("supervised loss masks and weights") {
  DetectorModel m(tiny_config(), 2);
  m.set_mode(nn::Mode::eval);
  const DetectorPass pass = m.forward(grid_points());
  const std::vector<SceneObject> gt{object({1, 1, 0.3}, {0.8, 0.8, 0.6}, 1)};

  SUBCASE("no ground truth leaves only objectness") {
    const auto l = supervised_loss(m, pass, std::vector<SceneObject>{}, LossWeights{});
    CHECK(l.report.vote == 0.0);
    CHECK(l.report.center == 0.0);
    CHECK(l.report.semantic == 0.0);
    CHECK(l.report.objectness > 0.0);
    for (std::size_t k = 0; k < pass.size(); ++k) CHECK(l.grad_votes(k, 0) == 0.0);
  }
  SUBCASE("each component scales linearly with its weight") {
    const SupervisedTargets t = supervised_targets(m, pass, gt, AssignParams{2.0, 3.0});
    LossWeights a, b;
    b.center = 3.0;
    b.semantic = 0.0;
    const auto la = supervised_loss(m, pass, gt, t, a), lb = supervised_loss(m, pass, gt, t, b);
    CHECK(la.report.center > 0.0);
    CHECK(lb.report.center == doctest::Approx(3.0 * la.report.center).epsilon(1e-12));
    CHECK(lb.report.semantic == 0.0);
    CHECK(lb.report.size == la.report.size);
  }
}

TEST_CASE("weighted pseudo-label mean") {
  CHECK(weighted_mean(std::vector<double>{1, 3}, std::vector<double>{1, 3}) == 2.5);
  CHECK(weighted_mean(std::vector<double>{1, 3}, std::vector<double>{0, 0}) == 0.0);
  CHECK(weighted_mean(std::vector<double>{2, 2, 2}, std::vector<double>{1, 5, 9}) == doctest::Approx(2.0));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> l(6), w(6), w2(6);
    for (auto& x : l) x = u(rng);
    for (auto& x : w) x = u(rng);
    const double c = u(rng);
    for (std::size_t i = 0; i < 6; ++i) w2[i] = c * w[i];
    CHECK(std::abs(weighted_mean(l, w) - weighted_mean(l, w2)) <= 1e-9);
  }
}

TEST_CASE("unsupervised loss equals the weighted mean of its terms") {
  auto p = fdcheck::make_problem(5);
  const DetectorPass tp = p.model.forward(p.target.points);
  const auto terms = unsupervised_terms(p.model, tp, p.pseudo);
  std::vector<double> w(terms.size(), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (p.pseudo[k]) w[k] = p.pseudo[k]->weight;
  }
  CHECK(unsupervised_loss(p.model, tp, p.pseudo).loss == doctest::Approx(weighted_mean(terms, w)).epsilon(1e-12));

  std::vector<std::optional<PseudoTarget>> empty(tp.size());
  const auto z = unsupervised_loss(p.model, tp, empty);
  CHECK(z.loss == 0.0);
  for (double g : z.grad_heads.data()) CHECK(g == 0.0);
}

TEST_CASE("holistic alignment loss") {
  const std::vector<double> half{0.5, 0.5};
  CHECK(hla_loss(half, half).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const auto h = hla_loss(std::vector<double>{0.2}, std::vector<double>{0.7});
  CHECK(h.grad_source_logits[0] == doctest::Approx(0.1));
  CHECK(h.grad_target_logits[0] == doctest::Approx(-0.15));
  CHECK(hla_loss(std::vector<double>{}, std::vector<double>{}).loss == 0.0);
}

TEST_CASE("total loss") {
  SupervisedReport s;
  s.total = 2.0;
  LossWeights w;
  w.hla = 0.1;
  w.cla = 1.0;
  const LossReport r = total_loss(s, 0.5, 1.0, w);
  CHECK(r.total == doctest::Approx(3.05).epsilon(1e-15));
  w.hla = 0;
  w.cla = 0;
  CHECK(total_loss(s, 0.5, 1.0, w).total == 2.0);
}

TEST_CASE("gradient reversal") {
  SUBCASE("zero coefficient blocks the backbone gradient") {
    auto p = fdcheck::make_problem(6, 0.0);
    fdcheck::objective(p, fdcheck::Path::hla, true);
    for (const auto& r : p.model.backbone_parameters()) {
      for (double g : r.grad) CHECK(g == 0.0);
    }
    bool disc = false;
    for (const auto& r : p.model.discriminator.parameters()) {
      for (double g : r.grad) disc = disc || g != 0.0;
    }
    CHECK(disc);
  }
  SUBCASE("backbone gradient is the negated, scaled plain gradient") {
    auto a = fdcheck::make_problem(7, 1.0), b = fdcheck::make_problem(7, 0.5);
    fdcheck::objective(a, fdcheck::Path::hla, true);
    fdcheck::objective(b, fdcheck::Path::hla, true);
    const auto ga = a.model.backbone_parameters(), gb = b.model.backbone_parameters();
    for (std::size_t t = 0; t < ga.size(); ++t) {
      for (std::size_t i = 0; i < ga[t].grad.size(); ++i) {
        CHECK(gb[t].grad[i] == doctest::Approx(0.5 * ga[t].grad[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("finite differences on every loss path") {
  for (auto path : {fdcheck::Path::supervised, fdcheck::Path::cla, fdcheck::Path::hla}) {
    auto p = fdcheck::make_problem(8);
    const auto r = fdcheck::check(p, path, 4);
    INFO(fdcheck::path_name(path), " worst ", r.worst);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.nonzero > 0);
  }
}
