#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "ohda/detector.hpp"
#include "ohda/losses.hpp"
#include "ohda/scene.hpp"

namespace ohda {

/// Score metrics used for filtering, in this order everywhere.
enum Metric : std::size_t { kObj = 0, kCls = 1, kIou = 2 };
inline constexpr std::size_t kNumMetrics = 3;
using MetricTriple = std::array<double, kNumMetrics>;

struct PseudoParams {
  double alpha = 10.0;  // percent
  double beta = 0.9;    // threshold momentum
  MetricTriple low = {0.3, 0.3, 0.25};
  MetricTriple high = {0.9, 0.9, 0.7};
  int passes = 3;
  double perturb_rate = 0.3;
  double lambda_mpr = 1.0;
  double match_radius = 0.3;
  double nms_iou = 0.25;
  double score_floor = 0.05;

  void validate() const;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PseudoParams, alpha, beta, low, high, passes, perturb_rate, lambda_mpr,
                                   match_radius, nms_iou, score_floor)

/// Nearest-rank percentile; nullopt for an empty list.
std::optional<double> percentile_nearest_rank(std::span<const double> values, double alpha);

/// Per-class, per-metric score buffers: buffers[c][m].
using ScoreBuffers = std::vector<std::array<std::vector<double>, kNumMetrics>>;
/// Per-class thresholds: thresholds[c][m].
using Thresholds = std::vector<MetricTriple>;

void append_scores(ScoreBuffers& buffers, std::span<const Detection> detections);
ScoreBuffers collect_scores(const DetectorModel& teacher, std::span<const Scene> scenes, double nms_iou,
                            double score_floor = 0.05);

Thresholds compute_thresholds(const ScoreBuffers& buffers, double alpha, const MetricTriple& low,
                              const MetricTriple& high);

struct ThresholdState {
  Thresholds current;
  ScoreBuffers buffers;
  double alpha = 10.0;
  double beta = 0.9;
  MetricTriple low{};
  MetricTriple high{};

  /// Initial state: thresholds computed directly from the first buffers.
  static ThresholdState init(const ScoreBuffers& initial, const PseudoParams& params);
  std::size_t num_classes() const { return current.size(); }
};

/// current <- beta * current + (1 - beta) * compute_thresholds(new buffers); buffers cleared.
void update_thresholds(ThresholdState& state, const ScoreBuffers& new_buffers);
/// Same, consuming the state's own accumulated buffers.
void update_thresholds(ThresholdState& state);

struct PseudoLabel {
  Aabb box;
  int class_id = 0;
  double obj_score = 0.0;
  double cls_score = 0.0;
  double iou_score = 0.0;
  double weight = 1.0;
};

/// Keeps a detection iff all three scores reach its class thresholds.
std::vector<PseudoLabel> filter_pseudo(std::span<const Detection> detections, const Thresholds& thresholds);

/// Sets weight = 1 + lambda * U, U the mean over sets of the best IoU with each set.
void mpr_weights(std::vector<PseudoLabel>& pseudo, std::span<const std::vector<PseudoLabel>> perturbed,
                 double lambda_mpr);

/// Nearest pseudo center per voted center (lower index wins ties), masked by radius.
std::vector<std::optional<PseudoTarget>> match_scheme_S(std::span<const Vec3> voted_centers,
                                                        std::span<const PseudoLabel> pseudo, double radius);

/// Teacher inference, NMS + thresholds, and optional MPR weighting for one scene.
std::vector<PseudoLabel> refine_scene(const DetectorModel& teacher, std::span<const Vec3> points,
                                      const Thresholds& thresholds, const PseudoParams& params, bool use_mpr,
                                      std::uint64_t perturb_seed, std::vector<Detection>* raw = nullptr);

json thresholds_to_json(const Thresholds& t);

}  // namespace ohda
