#include "ohda/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "ohda/rng.hpp"

namespace ohda {

namespace {

double box_surface(const Aabb& b) {
  const Vec3& s = b.size;
  return 2.0 * (s.x * s.y + s.x * s.z + s.y * s.z) - s.x * s.y;  // bottom face is never sampled
}

std::size_t draw(std::span<const double> probs, Rng& rng) {
  double u = rng.uniform();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (u < probs[i]) return i;
    u -= probs[i];
  }
  return probs.size() - 1;
}

void filter_members_to_boxes(Scene& scene) {
  for (auto& o : scene.objects) {
    std::erase_if(o.point_indices, [&](std::size_t i) { return !o.box.contains(scene.points[i], 1e-6); });
  }
}

}  // namespace

void AugmentParams::validate() const {
  if (!(scale_lo > 0) || scale_lo > scale_hi) throw ConfigError("augment: need 0 < scale_lo <= scale_hi");
  if (collision_iou < 0 || collision_iou > 1) throw ConfigError("augment: collision_iou must be in [0, 1]");
  if (vss_dropout < 0 || vss_dropout >= 1) throw ConfigError("augment: vss_dropout must be in [0, 1)");
  if (vss_noise_sigma < 0) throw ConfigError("augment: vss_noise_sigma must be >= 0");
  if (mix_min < 0 || mix_min > mix_max) throw ConfigError("augment: need 0 <= mix_min <= mix_max");
}

std::vector<double> inverse_freq_sampler(std::span<const double> frequencies) {
  if (frequencies.empty()) throw std::invalid_argument("inverse_freq_sampler: no classes");
  std::vector<double> p;
  p.reserve(frequencies.size());
  for (double f : frequencies) {
    if (!(f > 0)) throw std::invalid_argument("inverse_freq_sampler: frequencies must be positive");
    p.push_back(1.0 / f);
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  return p;
}

Scene mix_objects(const Scene& scene, const ObjectBank& bank, const AugmentParams& params,
                  std::uint64_t seed, int count, MixStats* stats) {
  Rng rng(seed);
  if (count < 0) count = static_cast<int>(rng.integer(params.mix_min, params.mix_max));
  MixStats local{count, 0, 0};
  Scene out = scene;
  if (count == 0 || bank.empty()) {
    local.skipped = count;
    if (stats) *stats = local;
    return out;
  }

  // Restrict sampling to classes that actually have prototypes.
  std::vector<double> freqs = bank.frequencies;
  for (std::size_t c = 0; c < freqs.size(); ++c) {
    if (bank.prototypes[c].empty()) freqs[c] = 1e300;
  }
  const auto probs = inverse_freq_sampler(freqs);

  std::size_t labeled_points = 0;
  double labeled_area = 0.0;
  for (const auto& o : scene.objects) {
    labeled_points += o.point_indices.size();
    labeled_area += box_surface(o.box);
  }
  const double density = labeled_area > 0 && labeled_points > 0 ? labeled_points / labeled_area : 60.0;
  const Aabb& room = scene.room_bounds;
  const Vec3 lo = room.min_corner(), hi = room.max_corner();

  for (int k = 0; k < count; ++k) {
    const auto cls = draw(probs, rng);
    const auto& protos = bank.prototypes[cls];
    const Prototype& proto =
        protos[static_cast<std::size_t>(rng.integer(0, static_cast<long long>(protos.size()) - 1))];
    const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
    bool done = false;
    for (int r = 0; r < params.max_retries && !done; ++r) {
      const double fx = rng.uniform(lo.x, hi.x);
      const double fy = rng.uniform(lo.y, hi.y);
      PlacedObject po = place_prototype(proto, {1, 1, 1}, yaw, fx, fy, scene.floor_z);
      if (!room.contains(po.box, 1e-9)) continue;
      const bool collides = std::any_of(out.objects.begin(), out.objects.end(), [&](const SceneObject& o) {
        return iou(o.box, po.box) > params.collision_iou;
      });
      if (collides) continue;
      const auto n = static_cast<std::size_t>(std::max(8.0, std::round(density * box_surface(po.box))));
      std::vector<std::size_t> order(po.points.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng.engine());
      SceneObject obj{static_cast<int>(cls), po.box, {}};
      for (std::size_t i = 0; i < n; ++i) {
        obj.point_indices.push_back(out.points.size());
        out.points.push_back(po.points[order[i % order.size()]]);
      }
      out.objects.push_back(std::move(obj));
      done = true;
    }
    if (done) {
      ++local.placed;
    } else {
      ++local.skipped;
    }
  }
  if (stats) *stats = local;
  return out;
}

MergeResult merge_collided(const Scene& scene, double collision_iou) {
  MergeResult res;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    res.groups.push_back({{i}, scene.objects[i].box});
  }
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < res.groups.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < res.groups.size() && !merged; ++j) {
        if (iou(res.groups[i].box, res.groups[j].box) <= collision_iou) continue;
        auto& a = res.groups[i];
        const auto& b = res.groups[j];
        const std::array<Aabb, 2> pair{a.box, b.box};
        a.box = cover_box(pair);
        a.members.insert(a.members.end(), b.members.begin(), b.members.end());
        std::sort(a.members.begin(), a.members.end());
        res.groups.erase(res.groups.begin() + static_cast<std::ptrdiff_t>(j));
        ++res.merges;
        merged = true;
      }
    }
  }
  return res;
}

void apply_group_transform(Scene& scene, const MergedGroup& group, const GroupTransform& t) {
  const Vec3 c = group.box.center;
  const bool scaled = t.scale != 1.0;
  const bool rotated = t.yaw != 0.0;
  auto move = [&](const Vec3& p) {
    Vec3 q = p;
    if (scaled) q = c + (q - c) * t.scale;
    if (rotated) q = rotate_yaw(q, c, t.yaw);
    return q + Vec3{t.dx, t.dy, 0.0};
  };
  const double quarter = t.yaw / (std::numbers::pi / 2);
  const bool quarter_turn = std::abs(quarter - std::round(quarter)) < 1e-12;
  const bool odd_turn = quarter_turn && (static_cast<long long>(std::llround(quarter)) % 2 != 0);

  double min_z = 1e300;
  for (std::size_t m : group.members) {
    auto& obj = scene.objects[m];
    for (std::size_t i : obj.point_indices) scene.points[i] = move(scene.points[i]);
    Vec3 size = obj.box.size * (scaled ? t.scale : 1.0);
    const Vec3 center = move(obj.box.center);
    if (quarter_turn) {
      if (odd_turn) std::swap(size.x, size.y);
      obj.box = Aabb{center, size};
    } else if (obj.point_indices.size() >= 16) {
      // Tight box around the rotated object; z extent follows the scaled box.
      Vec3 lo{1e300, 1e300, center.z - size.z / 2}, hi{-1e300, -1e300, center.z + size.z / 2};
      for (std::size_t i : obj.point_indices) {
        lo.x = std::min(lo.x, scene.points[i].x);
        lo.y = std::min(lo.y, scene.points[i].y);
        hi.x = std::max(hi.x, scene.points[i].x);
        hi.y = std::max(hi.y, scene.points[i].y);
      }
      obj.box = Aabb::from_corners(lo, hi);
    } else {
      const double cs = std::abs(std::cos(t.yaw)), sn = std::abs(std::sin(t.yaw));
      obj.box = Aabb{center, {cs * size.x + sn * size.y, sn * size.x + cs * size.y, size.z}};
    }
    min_z = std::min(min_z, obj.box.min_corner().z);
  }
  const double shift = scene.floor_z - min_z;
  if (std::abs(shift) > 1e-12) {
    for (std::size_t m : group.members) {
      auto& obj = scene.objects[m];
      for (std::size_t i : obj.point_indices) scene.points[i].z += shift;
      obj.box.center.z += shift;
    }
  }
}

Scene local_augment(const Scene& scene, std::span<const MergedGroup> groups_in,
                    const AugmentParams& params, std::uint64_t seed) {
  Rng rng(seed);
  Scene out = scene;
  std::vector<MergedGroup> groups(groups_in.begin(), groups_in.end());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    GroupTransform t;
    t.scale = rng.uniform(params.scale_lo, params.scale_hi);
    t.yaw = params.max_yaw > 0 ? rng.uniform(0.0, params.max_yaw) : 0.0;
    t.dx = rng.uniform(-params.max_translation, params.max_translation);
    t.dy = rng.uniform(-params.max_translation, params.max_translation);

    Scene trial = out;
    apply_group_transform(trial, groups[g], t);
    std::vector<Aabb> member_boxes;
    for (std::size_t m : groups[g].members) member_boxes.push_back(trial.objects[m].box);
    const Aabb moved = cover_box(member_boxes);
    bool ok = out.room_bounds.contains(moved, 1e-9);
    for (std::size_t h = 0; h < groups.size() && ok; ++h) {
      if (h != g && iou(groups[h].box, moved) > params.collision_iou) ok = false;
    }
    if (!ok) continue;
    out = std::move(trial);
    groups[g].box = moved;
  }
  return out;
}

Scene virtual_scan(const Scene& scene, const AugmentParams& params, std::uint64_t seed) {
  Rng rng(seed);
  const auto keep = visible_indices(scene.points, scene.room_bounds, scene.floor_z, params.scan,
                                    rng.engine()());
  Scene out = select_points(scene, keep);
  if (params.vss_noise_sigma > 0) {
    for (auto& p : out.points) {
      p += Vec3{rng.normal(0, params.vss_noise_sigma), rng.normal(0, params.vss_noise_sigma),
                rng.normal(0, params.vss_noise_sigma)};
    }
    filter_members_to_boxes(out);
  }
  if (params.vss_dropout > 0) {
    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < out.points.size(); ++i) {
      if (!rng.bernoulli(params.vss_dropout)) survivors.push_back(i);
    }
    out = select_points(out, survivors);
  }
  return out;
}

Scene augment_source_scene(const Scene& scene, const ObjectBank& bank, const AugmentParams& params,
                           bool object_aware, bool scan, std::uint64_t seed) {
  Scene out = scene;
  if (object_aware) {
    out = mix_objects(out, bank, params, derive_seed({seed, 1}));
    const auto merged = merge_collided(out, params.collision_iou);
    out = local_augment(out, merged.groups, params, derive_seed({seed, 2}));
  }
  if (scan) out = virtual_scan(out, params, derive_seed({seed, 3}));
  return out;
}

}  // namespace ohda
