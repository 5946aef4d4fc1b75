// Python bindings. Configs and reports cross the boundary as JSON text; the
// package wrapper turns them into dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ohda/cli.hpp"
#include "ohda/geometry.hpp"
#include "ohda/log.hpp"
#include "ohda/pseudo.hpp"

namespace py = pybind11;
using namespace ohda;

namespace {

using BoxTuple = std::pair<std::array<double, 3>, std::array<double, 3>>;

Aabb to_box(const BoxTuple& b) {
  return Aabb{{b.first[0], b.first[1], b.first[2]}, {b.second[0], b.second[1], b.second[2]}};
}

RunConfig config_from(const std::string& text) { return run_config_from_json(json::parse(text)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Synthetic-to-real adaptation for toy 3D detection";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<TrainingAborted>(m, "TrainingAborted", PyExc_RuntimeError);

  m.def("init_logging", &init_logging, "Apply OHDA_LOG_LEVEL to the library logger.");
  m.def("resolve_config", [](const std::string& overrides) { return json(config_from(overrides)).dump(); },
        py::arg("overrides") = "{}");

  m.def(
      "gen_data", [](const std::string& cfg, const std::string& out) { cmd_gen_data(config_from(cfg), out); },
      py::arg("config"), py::arg("out"));
  m.def(
      "pretrain",
      [](const std::string& cfg, const std::string& out) {
        py::gil_scoped_release release;
        return report_to_json(cmd_pretrain(config_from(cfg), out)).dump();
      },
      py::arg("config"), py::arg("out"));
  m.def(
      "adapt",
      [](const std::string& cfg, const std::string& checkpoint, const std::string& out) {
        py::gil_scoped_release release;
        return report_to_json(cmd_adapt(config_from(cfg), checkpoint, out)).dump();
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out"));
  m.def(
      "evaluate",
      [](const std::string& cfg, const std::string& checkpoint, const std::string& out) {
        py::gil_scoped_release release;
        return report_to_json(cmd_eval(config_from(cfg), checkpoint, out)).dump();
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out"));

  m.def(
      "iou", [](const BoxTuple& a, const BoxTuple& b) { return iou(to_box(a), to_box(b)); }, py::arg("a"),
      py::arg("b"), "IoU of two axis-aligned boxes given as (center, size).");
  m.def(
      "nms",
      [](const std::vector<BoxTuple>& boxes, const std::vector<double>& scores, double thresh) {
        if (boxes.size() != scores.size()) throw py::value_error("boxes and scores differ in length");
        std::vector<ScoredBox> in;
        for (std::size_t i = 0; i < boxes.size(); ++i) in.push_back({to_box(boxes[i]), 0, scores[i]});
        return nms(in, thresh);
      },
      py::arg("boxes"), py::arg("scores"), py::arg("iou_thresh"));
  m.def(
      "percentile_nearest_rank",
      [](const std::vector<double>& values, double alpha) { return percentile_nearest_rank(values, alpha); },
      py::arg("values"), py::arg("alpha"));
}
