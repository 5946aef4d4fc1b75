#include "ohda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

namespace ohda {

SceneEval scene_eval(std::vector<Detection> detections, const Scene& scene) {
  SceneEval s{std::move(detections), {}};
  for (const auto& o : scene.objects) s.gt.push_back({o.box, o.class_id});
  return s;
}

std::optional<double> ap_per_class(std::span<const SceneEval> inputs, int class_id, double iou_thresh) {
  struct Ranked {
    double score;
    std::size_t scene;
    std::size_t index;
  };
  std::vector<Ranked> ranked;
  std::size_t num_gt = 0;
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    for (const auto& g : inputs[s].gt) num_gt += g.class_id == class_id;
    for (std::size_t i = 0; i < inputs[s].detections.size(); ++i) {
      const auto& d = inputs[s].detections[i];
      if (d.class_id == class_id) ranked.push_back({d.score, s, i});
    }
  }
  if (num_gt == 0) return std::nullopt;
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.scene, a.index) < std::tie(b.scene, b.index);
  });

  std::vector<std::vector<bool>> used(inputs.size());
  for (std::size_t s = 0; s < inputs.size(); ++s) used[s].assign(inputs[s].gt.size(), false);

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& scene = inputs[ranked[r].scene];
    const Aabb& box = scene.detections[ranked[r].index].box;
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < scene.gt.size(); ++g) {
      if (scene.gt[g].class_id != class_id || used[ranked[r].scene][g]) continue;
      const double v = iou(box, scene.gt[g].box);
      if (v >= iou_thresh && v > best_iou) best_iou = v, best = g;
    }
    if (best) {
      used[ranked[r].scene][*best] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }

  // Precision envelope from the right, then area over recall steps.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return std::clamp(ap, 0.0, 1.0);
}

double MetricsReport::map_at(double iou_thresh) const {
  for (std::size_t t = 0; t < iou_thresholds.size(); ++t) {
    if (std::abs(iou_thresholds[t] - iou_thresh) < 1e-12) return map[t];
  }
  throw std::out_of_range("no mAP computed at this IoU threshold");
}

MetricsReport evaluate_detections(std::span<const SceneEval> inputs, std::span<const std::string> class_names,
                                  std::vector<double> iou_thresholds) {
  MetricsReport r;
  r.iou_thresholds = std::move(iou_thresholds);
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    ClassMetrics m;
    m.name = class_names[c];
    for (const auto& s : inputs) {
      for (const auto& g : s.gt) m.num_gt += g.class_id == static_cast<int>(c);
      for (const auto& d : s.detections) m.num_det += d.class_id == static_cast<int>(c);
    }
    for (double t : r.iou_thresholds) m.ap.push_back(ap_per_class(inputs, static_cast<int>(c), t));
    r.classes.push_back(std::move(m));
  }
  for (std::size_t t = 0; t < r.iou_thresholds.size(); ++t) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& m : r.classes) {
      if (m.ap[t]) sum += *m.ap[t], ++n;
    }
    r.map.push_back(n ? sum / static_cast<double>(n) : 0.0);
  }
  return r;
}

MetricsReport evaluate(const DetectorModel& model, std::span<const Scene> scenes,
                       std::span<const std::string> class_names, std::vector<double> iou_thresholds,
                       double nms_iou, double score_floor) {
  std::vector<SceneEval> inputs;
  inputs.reserve(scenes.size());
  for (const auto& s : scenes) inputs.push_back(scene_eval(infer(model, s.points, nms_iou, score_floor), s));
  return evaluate_detections(inputs, class_names, std::move(iou_thresholds));
}

namespace {

std::string threshold_key(const char* prefix, double t) {
  return prefix + std::to_string(static_cast<int>(std::lround(t * 100.0)));
}

}  // namespace

json report_to_json(const MetricsReport& report, const json& metadata) {
  json j;
  j["iou_thresholds"] = report.iou_thresholds;
  j["class_names"] = json::array();
  j["classes"] = json::object();
  for (const auto& m : report.classes) {
    json c;
    for (std::size_t t = 0; t < report.iou_thresholds.size(); ++t) {
      c[threshold_key("ap", report.iou_thresholds[t])] = m.ap[t] ? json(*m.ap[t]) : json(nullptr);
    }
    c["num_gt"] = m.num_gt;
    c["num_det"] = m.num_det;
    j["class_names"].push_back(m.name);
    j["classes"][m.name] = std::move(c);
  }
  for (std::size_t t = 0; t < report.iou_thresholds.size(); ++t) {
    j[threshold_key("map", report.iou_thresholds[t])] = report.map[t];
  }
  j["meta"] = metadata;
  return j;
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.iou_thresholds = j.at("iou_thresholds").get<std::vector<double>>();
  for (const auto& name : j.at("class_names")) {
    const json& c = j.at("classes").at(name.get<std::string>());
    ClassMetrics m;
    m.name = name.get<std::string>();
    for (double t : r.iou_thresholds) {
      const json& v = c.at(threshold_key("ap", t));
      m.ap.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    }
    m.num_gt = c.at("num_gt").get<std::size_t>();
    m.num_det = c.at("num_det").get<std::size_t>();
    r.classes.push_back(std::move(m));
  }
  for (double t : r.iou_thresholds) r.map.push_back(j.at(threshold_key("map", t)).get<double>());
  return r;
}

void write_report(const MetricsReport& report, const std::filesystem::path& path, const json& metadata) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << report_to_json(report, metadata).dump(2) << '\n';
  if (!out) throw std::runtime_error("failed while writing report: " + path.string());
}

}  // namespace ohda
