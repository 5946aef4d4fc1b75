#include "ohda/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ohda {

void PseudoParams::validate() const {
  if (!(alpha > 0.0 && alpha <= 100.0)) throw ConfigError("pseudo.alpha must be in (0, 100]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("pseudo.beta must be in [0, 1]");
  for (std::size_t m = 0; m < kNumMetrics; ++m) {
    if (!(low[m] >= 0.0 && low[m] <= high[m] && high[m] <= 1.0)) {
      throw ConfigError("pseudo clamps need 0 <= low <= high <= 1");
    }
  }
  if (passes < 1) throw ConfigError("pseudo.passes must be at least 1");
  if (!(perturb_rate >= 0.0 && perturb_rate < 1.0)) throw ConfigError("pseudo.perturb_rate must be in [0, 1)");
  if (lambda_mpr < 0.0) throw ConfigError("pseudo.lambda_mpr must be non-negative");
  if (match_radius <= 0.0) throw ConfigError("pseudo.match_radius must be positive");
}

std::optional<double> percentile_nearest_rank(std::span<const double> values, double alpha) {
  if (values.empty()) return std::nullopt;
  if (!(alpha > 0.0 && alpha <= 100.0)) throw std::invalid_argument("percentile: alpha must be in (0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  // alpha * n first keeps integral ranks exact (0.1 * 30 would round up past 3).
  const double exact = alpha * static_cast<double>(sorted.size()) / 100.0;
  const double rank = std::ceil(exact - 1e-9 * std::max(1.0, exact));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(sorted.size()))) - 1;
  return sorted[idx];
}

void append_scores(ScoreBuffers& buffers, std::span<const Detection> detections) {
  for (const auto& d : detections) {
    auto& b = buffers.at(static_cast<std::size_t>(d.class_id));
    b[kObj].push_back(d.obj_score);
    b[kCls].push_back(d.cls_score);
    b[kIou].push_back(d.iou_score);
  }
}

ScoreBuffers collect_scores(const DetectorModel& teacher, std::span<const Scene> scenes, double nms_iou,
                            double score_floor) {
  ScoreBuffers buffers(static_cast<std::size_t>(teacher.config().num_classes));
  for (const auto& s : scenes) append_scores(buffers, infer(teacher, s.points, nms_iou, score_floor));
  return buffers;
}

Thresholds compute_thresholds(const ScoreBuffers& buffers, double alpha, const MetricTriple& low,
                              const MetricTriple& high) {
  Thresholds t(buffers.size());
  for (std::size_t c = 0; c < buffers.size(); ++c) {
    for (std::size_t m = 0; m < kNumMetrics; ++m) {
      const auto p = percentile_nearest_rank(buffers[c][m], alpha);
      t[c][m] = p ? std::clamp(*p, low[m], high[m]) : high[m];
    }
  }
  return t;
}

ThresholdState ThresholdState::init(const ScoreBuffers& initial, const PseudoParams& params) {
  params.validate();
  ThresholdState s;
  s.alpha = params.alpha;
  s.beta = params.beta;
  s.low = params.low;
  s.high = params.high;
  s.current = compute_thresholds(initial, s.alpha, s.low, s.high);
  s.buffers.resize(initial.size());
  return s;
}

void update_thresholds(ThresholdState& state, const ScoreBuffers& new_buffers) {
  if (new_buffers.size() != state.current.size()) throw std::invalid_argument("update_thresholds: class count mismatch");
  const Thresholds fresh = compute_thresholds(new_buffers, state.alpha, state.low, state.high);
  for (std::size_t c = 0; c < fresh.size(); ++c) {
    for (std::size_t m = 0; m < kNumMetrics; ++m) {
      if (state.beta == 1.0) continue;
      if (state.beta == 0.0) {
        state.current[c][m] = fresh[c][m];
        continue;
      }
      const double v = state.beta * state.current[c][m] + (1.0 - state.beta) * fresh[c][m];
      // Guards the convex combination against rounding past a bound.
      state.current[c][m] = std::clamp(v, state.low[m], state.high[m]);
    }
  }
  for (auto& b : state.buffers) {
    for (auto& v : b) v.clear();
  }
}

void update_thresholds(ThresholdState& state) {
  const ScoreBuffers taken = std::move(state.buffers);
  state.buffers.assign(state.current.size(), {});
  update_thresholds(state, taken);
}

std::vector<PseudoLabel> filter_pseudo(std::span<const Detection> detections, const Thresholds& thresholds) {
  std::vector<PseudoLabel> out;
  for (const auto& d : detections) {
    const auto& t = thresholds.at(static_cast<std::size_t>(d.class_id));
    if (d.obj_score >= t[kObj] && d.cls_score >= t[kCls] && d.iou_score >= t[kIou]) {
      out.push_back({d.box, d.class_id, d.obj_score, d.cls_score, d.iou_score, 1.0});
    }
  }
  return out;
}

void mpr_weights(std::vector<PseudoLabel>& pseudo, std::span<const std::vector<PseudoLabel>> perturbed,
                 double lambda_mpr) {
  if (perturbed.empty()) throw std::invalid_argument("mpr_weights: need at least one perturbed set");
  for (auto& m : pseudo) {
    double sum = 0.0;
    for (const auto& set : perturbed) {
      double best = 0.0;
      for (const auto& n : set) best = std::max(best, iou(m.box, n.box));
      sum += best;
    }
    m.weight = 1.0 + lambda_mpr * (sum / static_cast<double>(perturbed.size()));
  }
}

std::vector<std::optional<PseudoTarget>> match_scheme_S(std::span<const Vec3> voted_centers,
                                                        std::span<const PseudoLabel> pseudo, double radius) {
  std::vector<std::optional<PseudoTarget>> out(voted_centers.size());
  if (pseudo.empty()) return out;
  for (std::size_t i = 0; i < voted_centers.size(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pseudo.size(); ++j) {
      const double d = (voted_centers[i] - pseudo[j].box.center).norm();
      if (d < best_d) best_d = d, best = j;
    }
    if (best_d <= radius) out[i] = PseudoTarget{pseudo[best].box, pseudo[best].class_id, pseudo[best].weight};
  }
  return out;
}

std::vector<PseudoLabel> refine_scene(const DetectorModel& teacher, std::span<const Vec3> points,
                                      const Thresholds& thresholds, const PseudoParams& params, bool use_mpr,
                                      std::uint64_t perturb_seed, std::vector<Detection>* raw) {
  auto dets = infer(teacher, points, params.nms_iou, params.score_floor);
  auto pseudo = filter_pseudo(dets, thresholds);
  if (raw) *raw = std::move(dets);
  if (use_mpr && !pseudo.empty()) {
    std::vector<std::vector<PseudoLabel>> sets;
    for (const auto& set : perturbed_infer(teacher, points, params.perturb_rate, params.passes, perturb_seed,
                                           params.nms_iou, params.score_floor)) {
      sets.push_back(filter_pseudo(set, thresholds));
    }
    mpr_weights(pseudo, sets, params.lambda_mpr);
  }
  return pseudo;
}

json thresholds_to_json(const Thresholds& t) {
  json out = json::array();
  for (const auto& row : t) out.push_back({{"obj", row[kObj]}, {"cls", row[kCls]}, {"iou", row[kIou]}});
  return out;
}

}  // namespace ohda
