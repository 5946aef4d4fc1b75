#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ohda {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr bool operator==(const Vec3&) const = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

/// Axis-aligned box given by its center and full extents.
struct Aabb {
  Vec3 center;
  Vec3 size;

  Vec3 min_corner() const { return center - size * 0.5; }
  Vec3 max_corner() const { return center + size * 0.5; }
  static Aabb from_corners(const Vec3& lo, const Vec3& hi) { return {(lo + hi) * 0.5, hi - lo}; }

  bool valid() const {
    return center.finite() && size.finite() && size.x >= 0 && size.y >= 0 && size.z >= 0;
  }
  /// Closed-box containment.
  bool contains(const Vec3& p, double tol = 0.0) const;
  bool contains(const Aabb& other, double tol = 0.0) const;

  bool operator==(const Aabb&) const = default;
};

struct ScoredBox {
  Aabb box;
  int class_id = 0;
  double score = 0.0;
};

double volume(const Aabb& b);
double intersection_volume(const Aabb& a, const Aabb& b);
/// Intersection over union; 0 when the union has zero volume.
double iou(const Aabb& a, const Aabb& b);

/// Smallest box containing every input box. Throws std::invalid_argument on empty input.
Aabb cover_box(std::span<const Aabb> boxes);

/// Greedy class-agnostic NMS. Returns kept indices in the order they were kept
/// (descending score, ties by lower index).
std::vector<std::size_t> nms(std::span<const ScoredBox> dets, double iou_thresh);

struct CenterMatch {
  std::size_t index = 0;
  double distance = 0.0;
  bool within = false;
};

/// Nearest reference per prediction (ties to the lower reference index).
/// With no references every entry is std::nullopt.
std::vector<std::optional<CenterMatch>> match_by_center(std::span<const Vec3> preds,
                                                        std::span<const Vec3> refs,
                                                        double radius);

/// Indices of points inside the closed box.
std::vector<std::size_t> crop(std::span<const Vec3> points, const Aabb& b);

/// Rotates p about the vertical axis through `pivot` by `yaw` radians.
Vec3 rotate_yaw(const Vec3& p, const Vec3& pivot, double yaw);

}  // namespace ohda
