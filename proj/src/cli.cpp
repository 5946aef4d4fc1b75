#include "ohda/cli.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "ohda/log.hpp"
#include "ohda/rng.hpp"

namespace ohda {

namespace fs = std::filesystem;

namespace {

// Scene-seed tags for the four generated splits.
enum : std::uint64_t { kSourceBank = 1, kTargetBank = 2, kSplitBase = 10 };

const char* kSplitNames[] = {"source_train", "source_eval", "target_train", "target_eval"};

Toggles toggles(bool oaa, bool vss, bool cla, bool hla, bool pcat, bool mpr) {
  return Toggles{oaa, vss, cla, hla, pcat, mpr};
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

TrainConfig with_dataset(TrainConfig t, const Dataset& ds) {
  t.detector.num_classes = static_cast<int>(ds.class_names.size());
  return t;
}

}  // namespace

std::vector<AblationVariant> default_ablation() {
  return {
      {"source_only", toggles(true, true, false, false, false, false), false},
      {"no_aug", toggles(false, false, true, true, true, true), true},
      {"hla_only", toggles(true, true, false, true, false, false), true},
      {"cla_naive", toggles(true, true, true, false, false, false), true},
      {"cla_only", toggles(true, true, true, false, true, true), true},
      {"cla_hla", toggles(true, true, true, true, false, false), true},
      {"full", toggles(true, true, true, true, true, true), true},
  };
}

void RunConfig::validate() const {
  source.validate();
  target.validate();
  train.validate();
  if (source.classes.size() != target.classes.size()) throw ConfigError("source and target need the same classes");
  for (std::size_t c = 0; c < source.classes.size(); ++c) {
    if (source.classes[c].name != target.classes[c].name) throw ConfigError("source and target class names differ");
  }
  if (static_cast<std::size_t>(train.detector.num_classes) != source.classes.size()) {
    throw ConfigError("train.detector.num_classes must equal the number of domain classes");
  }
  for (int n : {data.source_train, data.source_eval, data.target_train, data.target_eval}) {
    if (n < 0) throw ConfigError("data split sizes must be non-negative");
  }
  bool known = false;
  for (const char* s : kSplitNames) known = known || eval_split == s;
  if (!known) throw ConfigError("eval_split must name one of the four generated splits");
  for (const auto& v : ablation) {
    if (v.name.empty()) throw ConfigError("ablation variants need a name");
  }
}

RunConfig run_config_from_json(const json& overrides) {
  RunConfig cfg;
  try {
    cfg = parse_with_defaults<RunConfig>(overrides, cfg);
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::optional<fs::path>& path) {
  if (!path) return run_config_from_json(json::object());
  const json j = read_json_file(*path);
  try {
    return run_config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path->string() + ": " + e.what());
  }
}

void write_run_json(const fs::path& out, const std::string& command, const RunConfig& cfg, const json& extra) {
  json j = {{"command", command}, {"config", cfg}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  write_json_file(out / "run.json", j);
}

DataSplits generate_splits(const RunConfig& cfg) {
  const std::uint64_t s = cfg.data.seed;
  const auto sb = derive_seed({s, kSourceBank}), tb = derive_seed({s, kTargetBank});
  auto split = [&](const DomainSpec& spec, std::uint64_t bank, std::uint64_t tag, int n) {
    return make_dataset(spec, bank, derive_seed({s, kSplitBase + tag}), static_cast<std::size_t>(n));
  };
  return {split(cfg.source, sb, 0, cfg.data.source_train), split(cfg.source, sb, 1, cfg.data.source_eval),
          split(cfg.target, tb, 2, cfg.data.target_train), split(cfg.target, tb, 3, cfg.data.target_eval)};
}

DataSplits load_splits(const fs::path& root) {
  return {read_dataset(root / kSplitNames[0]), read_dataset(root / kSplitNames[1]),
          read_dataset(root / kSplitNames[2]), read_dataset(root / kSplitNames[3])};
}

void cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
  const DataSplits d = generate_splits(cfg);
  const Dataset* all[] = {&d.source_train, &d.source_eval, &d.target_train, &d.target_eval};
  for (int i = 0; i < 4; ++i) {
    write_dataset(*all[i], out / kSplitNames[i]);
    spdlog::info("wrote {} scenes to {}", all[i]->scenes.size(), (out / kSplitNames[i]).string());
  }
  write_run_json(out, "gen-data", cfg);
}

MetricsReport cmd_pretrain(const RunConfig& cfg, const fs::path& out) {
  const DataSplits d = load_splits(cfg.data.dir);
  fs::create_directories(out);
  write_run_json(out, "pretrain", cfg, {{"status", "running"}});
  JsonlLog log(out / "train_log.jsonl");
  const auto result = pretrain(with_dataset(cfg.train, d.source_train), d.source_train, &log);
  result.model.save(out / "pretrained", result.step_losses.size());
  const auto report = evaluate(result.model, d.target_eval.scenes, d.target_eval.class_names, {0.25, 0.5},
                               cfg.train.pseudo.nms_iou, cfg.train.pseudo.score_floor);
  write_report(report, out / "report_target.json", {{"checkpoint", (out / "pretrained").string()}, {"split", "target_eval"}});
  spdlog::info("pretrained target mAP25 {:.4f} mAP50 {:.4f}", report.map_at(0.25), report.map_at(0.5));
  write_run_json(out, "pretrain", cfg, {{"status", "done"}, {"checkpoint", (out / "pretrained").string()}});
  return report;
}

MetricsReport cmd_adapt(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out) {
  const DataSplits d = load_splits(cfg.data.dir);
  fs::create_directories(out);
  write_run_json(out, "adapt", cfg, {{"status", "running"}, {"checkpoint_in", checkpoint.string()}});
  const DetectorModel pretrained = DetectorModel::load(checkpoint);
  JsonlLog log(out / "adapt_log.jsonl");
  const TrainConfig tc = with_dataset(cfg.train, d.target_train);
  TrainState state = adapt_init(tc, pretrained, d.target_train);
  adapt(state, tc, d.source_train, d.target_train, &d.target_eval, &log);
  state.teacher.save(out / "adapted", state.step);
  save_state(state, out / "state");
  write_json_file(out / "history.json", state.history);
  const auto report = evaluate(state.teacher, d.target_eval.scenes, d.target_eval.class_names, {0.25, 0.5},
                               cfg.train.pseudo.nms_iou, cfg.train.pseudo.score_floor);
  write_report(report, out / "report_target.json", {{"checkpoint", (out / "adapted").string()}, {"split", "target_eval"}});
  spdlog::info("adapted target mAP25 {:.4f} mAP50 {:.4f}", report.map_at(0.25), report.map_at(0.5));
  write_run_json(out, "adapt", cfg,
                 {{"status", "done"}, {"checkpoint_in", checkpoint.string()}, {"checkpoint", (out / "adapted").string()}});
  return report;
}

MetricsReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out) {
  const Dataset ds = read_dataset(fs::path(cfg.data.dir) / cfg.eval_split);
  const DetectorModel model = DetectorModel::load(checkpoint);
  const auto report = evaluate(model, ds.scenes, ds.class_names, {0.25, 0.5}, cfg.train.pseudo.nms_iou,
                               cfg.train.pseudo.score_floor);
  fs::create_directories(out);
  write_report(report, out / "report.json", {{"checkpoint", checkpoint.string()}, {"split", cfg.eval_split}});
  write_run_json(out, "eval", cfg, {{"checkpoint", checkpoint.string()}});
  spdlog::info("{} mAP25 {:.4f} mAP50 {:.4f}", cfg.eval_split, report.map_at(0.25), report.map_at(0.5));
  return report;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out) {
  if (cfg.ablation.empty()) throw ConfigError("ablation list is empty");
  const DataSplits d = load_splits(cfg.data.dir);
  fs::create_directories(out);
  write_run_json(out, "ablate", cfg, {{"status", "running"}, {"checkpoint_in", checkpoint.string()}});
  const DetectorModel pretrained = DetectorModel::load(checkpoint);
  std::vector<AblationRow> rows;
  for (const auto& v : cfg.ablation) {
    spdlog::info("ablation variant {}", v.name);
    TrainConfig tc = with_dataset(cfg.train, d.target_train);
    tc.toggles = v.toggles;
    const fs::path dir = out / v.name;
    fs::create_directories(dir);
    MetricsReport report;
    if (v.train) {
      JsonlLog log(dir / "adapt_log.jsonl");
      TrainState state = adapt_init(tc, pretrained, d.target_train);
      adapt(state, tc, d.source_train, d.target_train, nullptr, &log);
      state.teacher.save(dir / "adapted", state.step);
      report = evaluate(state.teacher, d.target_eval.scenes, d.target_eval.class_names, {0.25, 0.5},
                        tc.pseudo.nms_iou, tc.pseudo.score_floor);
    } else {
      report = evaluate(pretrained, d.target_eval.scenes, d.target_eval.class_names, {0.25, 0.5},
                        tc.pseudo.nms_iou, tc.pseudo.score_floor);
    }
    write_report(report, dir / "report_target.json", {{"variant", v.name}});
    rows.push_back({v.name, v.toggles, report.map_at(0.25), report.map_at(0.5)});
    spdlog::info("{}: mAP25 {:.4f} mAP50 {:.4f}", v.name, rows.back().map25, rows.back().map50);
  }
  json summary = json::array();
  for (const auto& r : rows) {
    summary.push_back({{"name", r.name}, {"toggles", r.toggles}, {"map25", r.map25}, {"map50", r.map50}});
  }
  write_json_file(out / "ablation.json", summary);
  std::ofstream(out / "ablation.md") << ablation_table(rows);
  write_run_json(out, "ablate", cfg, {{"status", "done"}, {"checkpoint_in", checkpoint.string()}});
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  auto mark = [](bool b) { return b ? "x" : "-"; };
  std::ostringstream s;
  s << "| variant | OAA | VSS | CLA | HLA | PCAT | MPR | mAP25 | mAP50 |\n";
  s << "|---|---|---|---|---|---|---|---|---|\n";
  s << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    const auto& t = r.toggles;
    s << "| " << r.name << " | " << mark(t.oaa) << " | " << mark(t.vss) << " | " << mark(t.cla) << " | "
      << mark(t.hla) << " | " << mark(t.pcat) << " | " << mark(t.mpr) << " | " << 100.0 * r.map25 << " | "
      << 100.0 * r.map50 << " |\n";
  }
  return s.str();
}

}  // namespace ohda
