#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ohda/detector.hpp"
#include "ohda/scene.hpp"

namespace ohda {

struct GtBox {
  Aabb box;
  int class_id = 0;
};

struct SceneEval {
  std::vector<Detection> detections;
  std::vector<GtBox> gt;
};

SceneEval scene_eval(std::vector<Detection> detections, const Scene& scene);

/// All-point interpolated AP of one class; nullopt when the class has no GT.
std::optional<double> ap_per_class(std::span<const SceneEval> inputs, int class_id, double iou_thresh);

struct ClassMetrics {
  std::string name;
  std::vector<std::optional<double>> ap;  // one per IoU threshold
  std::size_t num_gt = 0;
  std::size_t num_det = 0;
};

struct MetricsReport {
  std::vector<double> iou_thresholds;
  std::vector<ClassMetrics> classes;
  std::vector<double> map;  // one per IoU threshold

  double map_at(double iou_thresh) const;
};

MetricsReport evaluate_detections(std::span<const SceneEval> inputs, std::span<const std::string> class_names,
                                  std::vector<double> iou_thresholds = {0.25, 0.5});
MetricsReport evaluate(const DetectorModel& model, std::span<const Scene> scenes,
                       std::span<const std::string> class_names, std::vector<double> iou_thresholds = {0.25, 0.5},
                       double nms_iou = 0.25, double score_floor = 0.05);

json report_to_json(const MetricsReport& report, const json& metadata = json::object());
MetricsReport report_from_json(const json& j);
void write_report(const MetricsReport& report, const std::filesystem::path& path,
                  const json& metadata = json::object());

}  // namespace ohda
