#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ohda/scene.hpp"

namespace ohda {

struct AugmentParams {
  int mix_min = 1;
  int mix_max = 3;
  double collision_iou = 0.01;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double max_yaw = 6.283185307179586;
  double max_translation = 1.0;
  int max_retries = 20;
  // Virtual scan simulation.
  ScanParams scan;
  double vss_noise_sigma = 0.01;
  double vss_dropout = 0.05;

  void validate() const;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AugmentParams, mix_min, mix_max, collision_iou, scale_lo, scale_hi,
                                   max_yaw, max_translation, max_retries, scan, vss_noise_sigma,
                                   vss_dropout)

struct MergedGroup {
  std::vector<std::size_t> members;  // object indices, ascending
  Aabb box;
};

struct MixStats {
  int requested = 0;
  int placed = 0;
  int skipped = 0;
};

/// p_c proportional to 1 / freq_c. Throws std::invalid_argument on a
/// non-positive frequency or an empty list.
std::vector<double> inverse_freq_sampler(std::span<const double> frequencies);

/// Scene-object mixture: drops up to `count` bank objects (class drawn by
/// inverse frequency) onto free floor. When `count` is negative it is drawn
/// from [mix_min, mix_max].
Scene mix_objects(const Scene& scene, const ObjectBank& bank, const AugmentParams& params,
                  std::uint64_t seed, int count = -1, MixStats* stats = nullptr);

struct MergeResult {
  std::vector<MergedGroup> groups;
  int merges = 0;
};

/// Merges objects whose group boxes collide until no pair of groups does.
MergeResult merge_collided(const Scene& scene, double collision_iou = 0.01);

/// Rigid-plus-scale transform of one group about its cover-box center.
struct GroupTransform {
  double scale = 1.0;
  double yaw = 0.0;
  double dx = 0.0;
  double dy = 0.0;
};

/// Applies `t` to the group's member points and boxes; the group is then
/// snapped so its lowest point rests on the floor. No collision checks.
void apply_group_transform(Scene& scene, const MergedGroup& group, const GroupTransform& t);

Scene local_augment(const Scene& scene, std::span<const MergedGroup> groups,
                    const AugmentParams& params, std::uint64_t seed);

/// Simplified virtual scan: ring-camera occlusion, Gaussian noise, dropout.
Scene virtual_scan(const Scene& scene, const AugmentParams& params, std::uint64_t seed);

/// mix_objects, merge_collided, local_augment, then (optionally) virtual_scan.
Scene augment_source_scene(const Scene& scene, const ObjectBank& bank, const AugmentParams& params,
                           bool object_aware, bool scan, std::uint64_t seed);

}  // namespace ohda
