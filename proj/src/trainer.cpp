#include "ohda/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "ohda/log.hpp"
#include "ohda/rng.hpp"

namespace ohda {

using nn::Tensor;

namespace {

// Stream tags for derive_seed; every random draw in training is keyed by one.
enum : std::uint64_t {
  kInitTag = 11,
  kPretrainOrder = 21,
  kPretrainAug = 22,
  kPretrainDrop = 23,
  kAdaptSourceOrder = 31,
  kAdaptTargetOrder = 32,
  kAdaptAug = 33,
  kAdaptDrop = 34,
  kAdaptPerturb = 35,
};

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Fisher-Yates with our own draws so the order is library independent.
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.engine()() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

void scale(Tensor& t, double s) {
  for (auto& v : t.data()) v *= s;
}

bool finite(double v) { return std::isfinite(v); }

DomainSpec spec_of(const Dataset& ds) {
  if (ds.spec.is_null() || ds.spec.empty()) throw ConfigError("dataset carries no domain spec");
  return ds.spec.get<DomainSpec>();
}

void check_classes(const TrainConfig& cfg, const Dataset& ds, const char* what) {
  if (ds.class_names.size() != static_cast<std::size_t>(cfg.detector.num_classes)) {
    throw ConfigError(std::string(what) + " dataset has " + std::to_string(ds.class_names.size()) +
                      " classes but detector.num_classes is " + std::to_string(cfg.detector.num_classes));
  }
}

std::vector<nn::ParamRef> refs(DetectorModel& m) { return m.parameters(); }

}  // namespace

void TrainConfig::validate() const {
  if (pretrain_epochs < 0 || adapt_epochs < 0) throw ConfigError("epochs must be non-negative");
  if (source_per_step < 1 || target_per_step < 1) throw ConfigError("scenes per step must be at least 1");
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) throw ConfigError("ema_momentum must be in [0, 1]");
  if (!(adam.lr > 0.0)) throw ConfigError("adam.lr must be positive");
  for (double w : {weights.hla, weights.cla, weights.grl, weights.vote, weights.objectness,
                   weights.center, weights.size, weights.semantic, weights.iou_head}) {
    if (!(w >= 0.0 && std::isfinite(w))) throw ConfigError("loss weights must be finite and non-negative");
  }
  if (!(assign.positive_radius > 0.0 && assign.positive_radius <= assign.negative_radius)) {
    throw ConfigError("assign radii need 0 < positive_radius <= negative_radius");
  }
  if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
  augment.validate();
  pseudo.validate();
  detector.validate();
}

JsonlLog::JsonlLog(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.emplace(path, std::ios::trunc);
  if (!*out_) throw std::runtime_error("cannot open log " + path.string());
}

void JsonlLog::write(const json& record) {
  if (!out_) return;
  *out_ << record.dump() << '\n';
  out_->flush();
}

std::vector<Vec3> class_mean_sizes(const Dataset& ds) {
  const std::size_t c = ds.class_names.size();
  std::vector<Vec3> sum(c, Vec3{0, 0, 0});
  std::vector<std::size_t> count(c, 0);
  for (const auto& s : ds.scenes) {
    for (const auto& o : s.objects) {
      const auto k = static_cast<std::size_t>(o.class_id);
      sum.at(k) = sum[k] + o.box.size;
      ++count[k];
    }
  }
  for (std::size_t k = 0; k < c; ++k) {
    sum[k] = count[k] ? sum[k] * (1.0 / static_cast<double>(count[k])) : Vec3{1, 1, 1};
  }
  return sum;
}

Scene source_view(const Scene& scene, const ObjectBank& bank, const TrainConfig& cfg, std::uint64_t seed) {
  return augment_source_scene(scene, bank, cfg.augment, cfg.toggles.oaa, cfg.toggles.vss, seed);
}

PretrainResult pretrain(const TrainConfig& cfg, const Dataset& source, JsonlLog* log) {
  cfg.validate();
  check_classes(cfg, source, "source");
  if (source.scenes.empty() && cfg.pretrain_epochs > 0) throw ConfigError("pretrain: empty source dataset");

  DetectorConfig dc = cfg.detector;
  if (dc.mean_sizes.empty()) dc.mean_sizes = class_mean_sizes(source);
  dc.grl_coefficient = cfg.weights.grl;
  PretrainResult out{DetectorModel(dc, derive_seed({cfg.seed, kInitTag})), {}};
  DetectorModel& model = out.model;
  model.set_mode(nn::Mode::train);
  auto all = refs(model);
  nn::round_to_f32(all);

  const ObjectBank bank = build_object_bank(spec_of(source), source.bank_seed);
  nn::Adam adam(cfg.adam);
  const auto params = model.detector_parameters();
  const auto ns = static_cast<std::size_t>(cfg.source_per_step);

  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const auto order = permutation(source.scenes.size(), derive_seed({cfg.seed, kPretrainOrder, std::uint64_t(epoch)}));
    for (std::size_t b = 0; b < order.size(); b += ns, ++step) {
      model.zero_grad();
      const std::size_t end = std::min(order.size(), b + ns);
      SupervisedReport mean;
      for (std::size_t i = b; i < end; ++i) {
        const double inv = 1.0 / static_cast<double>(end - b);
        const Scene view = source_view(source.scenes[order[i]], bank, cfg, derive_seed({cfg.seed, kPretrainAug, step, i - b}));
        PassOptions po;
        po.dropout_seed = derive_seed({cfg.seed, kPretrainDrop, step, i - b});
        DetectorPass pass = model.forward(view.points, po);
        auto sup = supervised_loss(model, pass, view.objects, cfg.weights, cfg.assign);
        if (!finite(sup.report.total)) {
          throw TrainingAborted("non-finite supervised loss during pretraining",
                                {{"phase", "pretrain"}, {"epoch", epoch}, {"step", step},
                                 {"scene", order[i]}, {"losses", sup.report}});
        }
        scale(sup.grad_votes, inv);
        scale(sup.grad_heads, inv);
        model.backward(pass, sup.grad_votes, sup.grad_heads);
        mean.total += inv * sup.report.total;
        mean.vote += inv * sup.report.vote;
        mean.objectness += inv * sup.report.objectness;
        mean.center += inv * sup.report.center;
        mean.size += inv * sup.report.size;
        mean.semantic += inv * sup.report.semantic;
        mean.iou_head += inv * sup.report.iou_head;
      }
      adam.step(params);
      out.step_losses.push_back(mean.total);
      if (log) log->write({{"phase", "pretrain"}, {"epoch", epoch}, {"step", step}, {"sup", mean}});
    }
    spdlog::info("pretrain epoch {}/{}: last-step loss {:.4f}", epoch + 1, cfg.pretrain_epochs,
                 out.step_losses.empty() ? 0.0 : out.step_losses.back());
  }
  // The checkpoint format is float32; keep the in-memory model identical to it.
  nn::round_to_f32(all);
  model.set_mode(nn::Mode::eval);
  return out;
}

Thresholds active_thresholds(const TrainState& state, const TrainConfig& cfg) {
  if (cfg.toggles.pcat) return state.thresholds.current;
  return Thresholds(static_cast<std::size_t>(cfg.detector.num_classes), cfg.fixed_thresholds);
}

TrainState adapt_init(const TrainConfig& cfg, const DetectorModel& pretrained, const Dataset& target_train) {
  cfg.validate();
  check_classes(cfg, target_train, "target");
  if (pretrained.config().num_classes != cfg.detector.num_classes) {
    throw ConfigError("checkpoint class count does not match the config");
  }
  TrainState s;
  s.student = pretrained;
  s.student.set_grl_coefficient(cfg.weights.grl);
  s.student.set_mode(nn::Mode::train);
  s.teacher = s.student;
  s.teacher.set_mode(nn::Mode::eval);
  s.adam = nn::Adam(cfg.adam);
  const auto buffers = collect_scores(s.teacher, target_train.scenes, cfg.pseudo.nms_iou, cfg.pseudo.score_floor);
  s.thresholds = ThresholdState::init(buffers, cfg.pseudo);
  return s;
}

void adapt_epoch(TrainState& state, const TrainConfig& cfg, const Dataset& source, const Dataset& target_train,
                 const Dataset* target_eval, JsonlLog* log) {
  if (target_train.scenes.empty()) throw ConfigError("adapt: empty target training set");
  if (source.scenes.empty()) throw ConfigError("adapt: empty source dataset");
  const ObjectBank bank = build_object_bank(spec_of(source), source.bank_seed);
  const auto epoch = static_cast<std::uint64_t>(state.epoch);
  const auto src_order = permutation(source.scenes.size(), derive_seed({cfg.seed, kAdaptSourceOrder, epoch}));
  const auto tgt_order = permutation(target_train.scenes.size(), derive_seed({cfg.seed, kAdaptTargetOrder, epoch}));
  const auto ns = static_cast<std::size_t>(cfg.source_per_step);
  const auto nt = static_cast<std::size_t>(cfg.target_per_step);
  const bool use_target = cfg.toggles.cla || cfg.toggles.hla;
  DetectorModel& student = state.student;
  DetectorModel& teacher = state.teacher;
  student.set_mode(nn::Mode::train);
  teacher.set_mode(nn::Mode::eval);

  json epoch_sum = {{"sup", 0.0}, {"cla", 0.0}, {"hla", 0.0}, {"total", 0.0}, {"pseudo", 0}, {"matched", 0}};
  std::size_t steps = 0;
  std::size_t src_cursor = 0;
  for (std::size_t b = 0; b < tgt_order.size(); b += nt, ++state.step, ++steps) {
    const std::uint64_t step = state.step;
    student.zero_grad();
    const std::size_t tend = std::min(tgt_order.size(), b + nt);

    // Source stream: augmented, labeled.
    std::vector<DetectorPass> src_passes;
    std::vector<SupervisedLoss> sups;
    double sup_total = 0.0;
    for (std::size_t j = 0; j < ns; ++j, ++src_cursor) {
      const std::size_t idx = src_order[src_cursor % src_order.size()];
      const Scene view = source_view(source.scenes[idx], bank, cfg, derive_seed({cfg.seed, kAdaptAug, step, j}));
      PassOptions po;
      po.dropout_seed = derive_seed({cfg.seed, kAdaptDrop, step, j});
      src_passes.push_back(student.forward(view.points, po));
      sups.push_back(supervised_loss(student, src_passes.back(), view.objects, cfg.weights, cfg.assign));
      sup_total += sups.back().report.total / static_cast<double>(ns);
    }

    // Target stream: raw points, pseudo labels from the teacher.
    std::vector<DetectorPass> tgt_passes;
    std::vector<HeadLoss> clas;
    double cla_total = 0.0;
    std::size_t n_pseudo = 0, n_matched = 0;
    if (use_target) {
      for (std::size_t i = b; i < tend; ++i) {
        const Scene& scene = target_train.scenes[tgt_order[i]];
        PassOptions po;
        po.dropout_seed = derive_seed({cfg.seed, kAdaptDrop, step, 1000 + (i - b)});
        tgt_passes.push_back(student.forward(scene.points, po));
        if (!cfg.toggles.cla) continue;
        std::vector<Detection> raw;
        const auto pseudo = refine_scene(teacher, scene.points, active_thresholds(state, cfg), cfg.pseudo,
                                         cfg.toggles.mpr, derive_seed({cfg.seed, kAdaptPerturb, step, i - b}), &raw);
        if (cfg.toggles.pcat) append_scores(state.thresholds.buffers, raw);
        const DetectorPass& tp = tgt_passes.back();
        std::vector<Vec3> voted(tp.size());
        for (std::size_t k = 0; k < tp.size(); ++k) voted[k] = tp.voted_center(k);
        const auto targets = match_scheme_S(voted, pseudo, cfg.pseudo.match_radius);
        clas.push_back(unsupervised_loss(student, tp, targets));
        cla_total += clas.back().loss / static_cast<double>(tend - b);
        n_pseudo += pseudo.size();
        for (const auto& t : targets) n_matched += t.has_value();
      }
    }

    // Holistic alignment over every proposal of both streams.
    double hla_value = 0.0;
    std::vector<Tensor> src_feat_grad(src_passes.size()), tgt_feat_grad(tgt_passes.size());
    if (cfg.toggles.hla) {
      std::vector<DiscPass> src_disc, tgt_disc;
      std::vector<double> sp, tp;
      for (const auto& p : src_passes) {
        src_disc.push_back(student.discriminate(p.features));
        sp.insert(sp.end(), src_disc.back().probs.begin(), src_disc.back().probs.end());
      }
      for (const auto& p : tgt_passes) {
        tgt_disc.push_back(student.discriminate(p.features));
        tp.insert(tp.end(), tgt_disc.back().probs.begin(), tgt_disc.back().probs.end());
      }
      auto hla = hla_loss(sp, tp);
      hla_value = hla.loss;
      for (auto& g : hla.grad_source_logits) g *= cfg.weights.hla;
      for (auto& g : hla.grad_target_logits) g *= cfg.weights.hla;
      std::size_t off = 0;
      for (std::size_t j = 0; j < src_disc.size(); ++j) {
        const auto n = src_disc[j].probs.size();
        src_feat_grad[j] = student.backward_discriminator(
            src_disc[j], std::span<const double>(hla.grad_source_logits).subspan(off, n));
        off += n;
      }
      off = 0;
      for (std::size_t j = 0; j < tgt_disc.size(); ++j) {
        const auto n = tgt_disc[j].probs.size();
        tgt_feat_grad[j] = student.backward_discriminator(
            tgt_disc[j], std::span<const double>(hla.grad_target_logits).subspan(off, n));
        off += n;
      }
    }

    const LossReport report = total_loss(SupervisedReport{.total = sup_total}, hla_value, cla_total, cfg.weights);
    if (!finite(report.total)) {
      throw TrainingAborted("non-finite loss during adaptation",
                            {{"phase", "adapt"}, {"epoch", state.epoch}, {"step", step},
                             {"target_scenes", std::vector<std::size_t>(tgt_order.begin() + b, tgt_order.begin() + tend)},
                             {"losses", report}});
    }

    for (std::size_t j = 0; j < src_passes.size(); ++j) {
      auto& s = sups[j];
      scale(s.grad_votes, 1.0 / static_cast<double>(ns));
      scale(s.grad_heads, 1.0 / static_cast<double>(ns));
      student.backward(src_passes[j], s.grad_votes, s.grad_heads, cfg.toggles.hla ? &src_feat_grad[j] : nullptr);
    }
    const double cla_scale = cfg.weights.cla / static_cast<double>(tend - b);
    for (std::size_t j = 0; j < tgt_passes.size(); ++j) {
      Tensor gv = Tensor::matrix(tgt_passes[j].size(), 3);
      Tensor gh = Tensor::matrix(tgt_passes[j].size(), student.layout().width());
      if (cfg.toggles.cla) {
        gv = clas[j].grad_votes;
        gh = clas[j].grad_heads;
        scale(gv, cla_scale);
        scale(gh, cla_scale);
      }
      student.backward(tgt_passes[j], gv, gh, cfg.toggles.hla ? &tgt_feat_grad[j] : nullptr);
    }

    auto sparams = refs(student);
    state.adam.step(sparams);
    auto tparams = refs(teacher);
    nn::ema_update(tparams, sparams, cfg.ema_momentum);

    epoch_sum["sup"] = epoch_sum["sup"].get<double>() + sup_total;
    epoch_sum["cla"] = epoch_sum["cla"].get<double>() + cla_total;
    epoch_sum["hla"] = epoch_sum["hla"].get<double>() + hla_value;
    epoch_sum["total"] = epoch_sum["total"].get<double>() + report.total;
    epoch_sum["pseudo"] = epoch_sum["pseudo"].get<std::size_t>() + n_pseudo;
    epoch_sum["matched"] = epoch_sum["matched"].get<std::size_t>() + n_matched;
    if (log) {
      log->write({{"phase", "adapt"}, {"epoch", state.epoch}, {"step", step}, {"sup", sup_total},
                  {"cla", cla_total}, {"hla", hla_value}, {"total", report.total}, {"pseudo", n_pseudo},
                  {"matched", n_matched}});
    }
  }

  if (cfg.toggles.pcat) update_thresholds(state.thresholds);
  ++state.epoch;

  json record = {{"phase", "adapt_epoch"}, {"epoch", state.epoch}, {"steps", steps},
                 {"thresholds", thresholds_to_json(active_thresholds(state, cfg))}};
  for (const char* k : {"sup", "cla", "hla", "total"}) {
    record["mean_" + std::string(k)] = epoch_sum[k].get<double>() / static_cast<double>(std::max<std::size_t>(steps, 1));
  }
  record["pseudo"] = epoch_sum["pseudo"];
  record["matched"] = epoch_sum["matched"];
  const bool due = cfg.eval_every > 0 ? state.epoch % cfg.eval_every == 0 : false;
  if (target_eval && (due || state.epoch == cfg.adapt_epochs)) {
    const auto rep = evaluate(teacher, target_eval->scenes, target_eval->class_names, {0.25, 0.5},
                              cfg.pseudo.nms_iou, cfg.pseudo.score_floor);
    record["map25"] = rep.map_at(0.25);
    record["map50"] = rep.map_at(0.5);
    spdlog::info("adapt epoch {}/{}: target mAP25 {:.4f} mAP50 {:.4f}, pseudo labels {}", state.epoch,
                 cfg.adapt_epochs, rep.map_at(0.25), rep.map_at(0.5), record["pseudo"].get<std::size_t>());
  } else {
    spdlog::info("adapt epoch {}/{}: mean loss {:.4f}, pseudo labels {}", state.epoch, cfg.adapt_epochs,
                 record["mean_total"].get<double>(), record["pseudo"].get<std::size_t>());
  }
  state.history.push_back(record);
  if (log) log->write(record);
}

void adapt(TrainState& state, const TrainConfig& cfg, const Dataset& source, const Dataset& target_train,
           const Dataset* target_eval, JsonlLog* log) {
  while (state.epoch < cfg.adapt_epochs) adapt_epoch(state, cfg, source, target_train, target_eval, log);
  state.teacher.set_mode(nn::Mode::eval);
}

// --- State persistence -------------------------------------------------------------

namespace {

constexpr int kStateVersion = 1;

void put(std::vector<unsigned char>& blob, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) blob.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu));
}

double take(const std::vector<unsigned char>& blob, std::size_t& at) {
  if (at + 8 > blob.size()) throw nn::CheckpointError("training state blob is truncated");
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(blob[at + b]) << (8 * b);
  at += 8;
  return std::bit_cast<double>(bits);
}

json model_header(const DetectorModel& m) {
  const json man = m.manifest();
  return {{"config", man.at("config")}, {"seed", man.at("seed")}, {"nets", man.at("nets")}};
}

DetectorModel model_from_header(const json& h) {
  DetectorModel m(h.at("config").get<DetectorConfig>(), h.at("seed").get<std::uint64_t>());
  if (m.manifest().at("nets") != h.at("nets")) throw nn::CheckpointError("training state architecture mismatch");
  return m;
}

}  // namespace

void save_state(const TrainState& state, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto& st = const_cast<TrainState&>(state);
  std::vector<unsigned char> blob;
  for (DetectorModel* m : {&st.student, &st.teacher}) {
    for (const auto& p : m->parameters()) {
      for (double v : p.value) put(blob, v);
    }
  }
  for (const auto* moments : {&state.adam.first_moments(), &state.adam.second_moments()}) {
    for (const auto& buf : *moments) {
      for (double v : buf) put(blob, v);
    }
  }
  json buffers = json::array();
  for (const auto& c : state.thresholds.buffers) buffers.push_back({c[kObj], c[kCls], c[kIou]});
  json meta = {
      {"kind", "ohda-train-state"},
      {"version", kStateVersion},
      {"student", model_header(state.student)},
      {"teacher", model_header(state.teacher)},
      {"adam", {{"config", state.adam.config()}, {"steps", state.adam.steps()}, {"has_moments", !state.adam.first_moments().empty()}}},
      {"thresholds",
       {{"current", state.thresholds.current},
        {"buffers", buffers},
        {"alpha", state.thresholds.alpha},
        {"beta", state.thresholds.beta},
        {"low", state.thresholds.low},
        {"high", state.thresholds.high}}},
      {"epoch", state.epoch},
      {"step", state.step},
      {"history", state.history},
      {"blob_bytes", blob.size()},
      {"checksum_fnv1a", nn::fnv1a(blob)},
  };
  {
    std::ofstream out(dir / "state.bin", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw nn::CheckpointError("failed to write " + (dir / "state.bin").string());
  }
  std::ofstream out(dir / "state.json", std::ios::trunc);
  out << meta.dump(2) << '\n';
  if (!out) throw nn::CheckpointError("failed to write " + (dir / "state.json").string());
}

TrainState load_state(const std::filesystem::path& dir) {
  json meta;
  {
    std::ifstream in(dir / "state.json");
    if (!in) throw nn::CheckpointError("cannot open " + (dir / "state.json").string());
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw nn::CheckpointError("malformed training state: " + std::string(e.what()));
    }
  }
  if (meta.value("kind", "") != "ohda-train-state" || meta.value("version", 0) != kStateVersion) {
    throw nn::CheckpointError("unsupported training state version in " + dir.string());
  }
  std::ifstream in(dir / "state.bin", std::ios::binary);
  if (!in) throw nn::CheckpointError("cannot open " + (dir / "state.bin").string());
  const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() != meta.at("blob_bytes").get<std::size_t>() ||
      nn::fnv1a(blob) != meta.at("checksum_fnv1a").get<std::uint64_t>()) {
    throw nn::CheckpointError("training state blob is corrupted: " + (dir / "state.bin").string());
  }

  TrainState s;
  s.student = model_from_header(meta.at("student"));
  s.teacher = model_from_header(meta.at("teacher"));
  std::size_t at = 0;
  for (DetectorModel* m : {&s.student, &s.teacher}) {
    for (const auto& p : m->parameters()) {
      for (double& v : p.value) v = take(blob, at);
    }
  }
  const json& a = meta.at("adam");
  s.adam = nn::Adam(a.at("config").get<nn::AdamConfig>());
  s.adam.set_steps(a.at("steps").get<std::uint64_t>());
  if (a.at("has_moments").get<bool>()) {
    for (auto* moments : {&s.adam.first_moments(), &s.adam.second_moments()}) {
      for (const auto& p : s.student.parameters()) {
        std::vector<double> buf(p.value.size());
        for (double& v : buf) v = take(blob, at);
        moments->push_back(std::move(buf));
      }
    }
  }
  if (at != blob.size()) throw nn::CheckpointError("training state blob has trailing data");

  const json& t = meta.at("thresholds");
  s.thresholds.current = t.at("current").get<Thresholds>();
  for (const auto& c : t.at("buffers")) {
    std::array<std::vector<double>, kNumMetrics> b;
    for (std::size_t m = 0; m < kNumMetrics; ++m) b[m] = c.at(m).get<std::vector<double>>();
    s.thresholds.buffers.push_back(std::move(b));
  }
  s.thresholds.alpha = t.at("alpha").get<double>();
  s.thresholds.beta = t.at("beta").get<double>();
  s.thresholds.low = t.at("low").get<MetricTriple>();
  s.thresholds.high = t.at("high").get<MetricTriple>();
  s.epoch = meta.at("epoch").get<int>();
  s.step = meta.at("step").get<std::uint64_t>();
  s.history = meta.at("history");
  s.student.set_mode(nn::Mode::train);
  s.teacher.set_mode(nn::Mode::eval);
  return s;
}

}  // namespace ohda
