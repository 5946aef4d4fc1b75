#include "ohda/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ohda {

bool Aabb::contains(const Vec3& p, double tol) const {
  const Vec3 lo = min_corner();
  const Vec3 hi = max_corner();
  for (std::size_t d = 0; d < 3; ++d) {
    if (p[d] < lo[d] - tol || p[d] > hi[d] + tol) return false;
  }
  return true;
}

bool Aabb::contains(const Aabb& other, double tol) const {
  return contains(other.min_corner(), tol) && contains(other.max_corner(), tol);
}

double volume(const Aabb& b) { return b.size.x * b.size.y * b.size.z; }

double intersection_volume(const Aabb& a, const Aabb& b) {
  const Vec3 alo = a.min_corner(), ahi = a.max_corner();
  const Vec3 blo = b.min_corner(), bhi = b.max_corner();
  double v = 1.0;
  for (std::size_t d = 0; d < 3; ++d) {
    const double overlap = std::min(ahi[d], bhi[d]) - std::max(alo[d], blo[d]);
    if (overlap <= 0.0) return 0.0;
    v *= overlap;
  }
  return v;
}

namespace {

// Volume from the corners, rounded the same way as the intersection so that
// identical boxes give an IoU of exactly 1.
double corner_volume(const Aabb& b) {
  const Vec3 lo = b.min_corner(), hi = b.max_corner();
  return (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z);
}

}  // namespace

double iou(const Aabb& a, const Aabb& b) {
  const double inter = intersection_volume(a, b);
  const double uni = corner_volume(a) + corner_volume(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Aabb cover_box(std::span<const Aabb> boxes) {
  if (boxes.empty()) throw std::invalid_argument("cover_box: empty box list");
  Vec3 lo = boxes.front().min_corner();
  Vec3 hi = boxes.front().max_corner();
  for (const auto& b : boxes.subspan(1)) {
    const Vec3 blo = b.min_corner(), bhi = b.max_corner();
    for (std::size_t d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], blo[d]);
      hi[d] = std::max(hi[d], bhi[d]);
    }
  }
  if (boxes.size() == 1) return boxes.front();
  return Aabb::from_corners(lo, hi);
}

std::vector<std::size_t> nms(std::span<const ScoredBox> dets, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<std::size_t> kept;
  std::vector<bool> suppressed(dets.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t cur = order[i];
    if (suppressed[cur]) continue;
    kept.push_back(cur);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const std::size_t other = order[j];
      if (!suppressed[other] && iou(dets[cur].box, dets[other].box) > iou_thresh) {
        suppressed[other] = true;
      }
    }
  }
  return kept;
}

std::vector<std::optional<CenterMatch>> match_by_center(std::span<const Vec3> preds,
                                                        std::span<const Vec3> refs,
                                                        double radius) {
  std::vector<std::optional<CenterMatch>> out(preds.size());
  if (refs.empty()) return out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CenterMatch best{0, std::numeric_limits<double>::infinity(), false};
    for (std::size_t j = 0; j < refs.size(); ++j) {
      const double d = distance(preds[i], refs[j]);
      if (d < best.distance) best = {j, d, false};
    }
    best.within = best.distance <= radius;
    out[i] = best;
  }
  return out;
}

std::vector<std::size_t> crop(std::span<const Vec3> points, const Aabb& b) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (b.contains(points[i])) idx.push_back(i);
  }
  return idx;
}

Vec3 rotate_yaw(const Vec3& p, const Vec3& pivot, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double dx = p.x - pivot.x, dy = p.y - pivot.y;
  return {pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy, p.z};
}

}  // namespace ohda
