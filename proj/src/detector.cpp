#include "ohda/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ohda/rng.hpp"

namespace ohda {

using nn::Tensor;

void DetectorConfig::validate() const {
  if (num_classes < 2) throw ConfigError("detector: need at least 2 classes");
  if (num_seeds < 1 || group_size < 1) throw ConfigError("detector: num_seeds and group_size must be >= 1");
  if (!(radius > 0)) throw ConfigError("detector: radius must be positive");
  if (backbone_dropout < 0 || backbone_dropout >= 1) throw ConfigError("detector: backbone_dropout in [0, 1)");
  if (!mean_sizes.empty() && mean_sizes.size() != static_cast<std::size_t>(num_classes)) {
    throw ConfigError("detector: mean_sizes must have one entry per class");
  }
}

std::vector<std::size_t> fps(std::span<const Vec3> points, std::size_t k) {
  if (k > points.size()) throw std::invalid_argument("fps: requested more seeds than points");
  std::vector<std::size_t> chosen;
  if (k == 0) return chosen;
  chosen.reserve(k);
  std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
  std::size_t last = 0;
  chosen.push_back(0);
  while (chosen.size() < k) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3 d = points[i] - points[last];
      dist[i] = std::min(dist[i], d.x * d.x + d.y * d.y + d.z * d.z);
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    chosen.push_back(best);
    last = best;
  }
  return chosen;
}

std::vector<std::size_t> group_neighbors(std::span<const Vec3> points, std::size_t seed_index,
                                         double radius, std::size_t group_size) {
  const Vec3 s = points[seed_index];
  const double r2 = radius * radius;
  std::vector<std::size_t> ball;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 d = points[i] - s;
    if (d.x * d.x + d.y * d.y + d.z * d.z <= r2) ball.push_back(i);
  }
  std::vector<std::size_t> group;
  group.reserve(group_size);
  if (ball.size() > group_size) {
    for (std::size_t g = 0; g < group_size; ++g) group.push_back(ball[g * ball.size() / group_size]);
  } else {
    group = ball;
    while (group.size() < group_size) group.push_back(seed_index);
  }
  return group;
}

DetectorModel::DetectorModel(DetectorConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  config_.validate();
  if (config_.mean_sizes.empty()) config_.mean_sizes.assign(static_cast<std::size_t>(config_.num_classes), {1, 1, 1});
  const auto ph = static_cast<std::size_t>(config_.point_hidden);
  const auto pf = static_cast<std::size_t>(config_.point_features);
  const auto fd = static_cast<std::size_t>(config_.feature_dim);
  const auto hh = static_cast<std::size_t>(config_.head_hidden);
  const auto dh = static_cast<std::size_t>(config_.disc_hidden);
  const double drop = config_.backbone_dropout;
  point_mlp.dense(3, ph).relu().dropout(drop).dense(ph, pf).relu().dropout(drop);
  vote_head.dense(pf, hh).relu().dense(hh, 3);
  feature_head.dense(pf, fd).relu().dropout(drop);
  decoder.dense(fd, hh).relu().dense(hh, layout().width());
  discriminator.grad_reverse(config_.grl_coefficient).dense(fd, dh).relu().dense(dh, 1);
  point_mlp.init(derive_seed({seed, 1}));
  vote_head.init(derive_seed({seed, 2}));
  feature_head.init(derive_seed({seed, 3}));
  decoder.init(derive_seed({seed, 4}));
  discriminator.init(derive_seed({seed, 5}));
}

std::vector<nn::ParamRef> DetectorModel::backbone_parameters() {
  std::vector<nn::ParamRef> out;
  for (nn::Net* net : {&point_mlp, &vote_head, &feature_head}) {
    for (auto& p : net->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<nn::ParamRef> DetectorModel::detector_parameters() {
  auto out = backbone_parameters();
  for (auto& p : decoder.parameters()) out.push_back(p);
  return out;
}

std::vector<nn::ParamRef> DetectorModel::parameters() {
  auto out = detector_parameters();
  for (auto& p : discriminator.parameters()) out.push_back(p);
  static const char* prefixes[] = {"point_mlp.", "vote_head.", "feature_head.", "decoder.", "discriminator."};
  // Prefix names with the owning net for readable checkpoints and reports.
  std::size_t net = 0, seen = 0;
  const std::size_t counts[] = {point_mlp.parameters().size(), vote_head.parameters().size(),
                                feature_head.parameters().size(), decoder.parameters().size(),
                                discriminator.parameters().size()};
  for (auto& p : out) {
    while (seen == counts[net]) {
      ++net;
      seen = 0;
    }
    p.name = prefixes[net] + p.name;
    ++seen;
  }
  return out;
}

std::size_t DetectorModel::num_parameters() const {
  return point_mlp.num_parameters() + vote_head.num_parameters() + feature_head.num_parameters() +
         decoder.num_parameters() + discriminator.num_parameters();
}

void DetectorModel::zero_grad() {
  for (nn::Net* net : {&point_mlp, &vote_head, &feature_head, &decoder, &discriminator}) net->zero_grad();
}

void DetectorModel::set_mode(nn::Mode mode) {
  for (nn::Net* net : {&point_mlp, &vote_head, &feature_head, &decoder, &discriminator}) net->mode = mode;
}

DetectorPass DetectorModel::forward(std::span<const Vec3> points, const PassOptions& opts) const {
  DetectorPass pass;
  const std::size_t k = std::min(points.size(), static_cast<std::size_t>(config_.num_seeds));
  const auto g = static_cast<std::size_t>(config_.group_size);
  const auto pf = static_cast<std::size_t>(config_.point_features);
  pass.seed_indices = fps(points, k);
  for (std::size_t s : pass.seed_indices) pass.seeds.push_back(points[s]);

  Tensor local = Tensor::matrix(k * g, 3);
  pass.group_points.reserve(k * g);
  for (std::size_t s = 0; s < k; ++s) {
    const auto group = group_neighbors(points, pass.seed_indices[s], config_.radius, g);
    for (std::size_t j = 0; j < g; ++j) {
      const Vec3 d = (points[group[j]] - pass.seeds[s]) * (1.0 / config_.radius);
      local(s * g + j, 0) = d.x;
      local(s * g + j, 1) = d.y;
      local(s * g + j, 2) = d.z;
      pass.group_points.push_back(group[j]);
    }
  }

  auto net_opts = [&](std::uint64_t salt, const nn::Tape* frozen) {
    nn::ForwardOptions o;
    o.dropout_seed = derive_seed({opts.dropout_seed, salt});
    o.force_dropout_rate = opts.force_dropout_rate;
    o.mode = opts.mode;
    o.frozen_masks = frozen;
    return o;
  };
  const DetectorPass* fz = opts.frozen;
  pass.point_tape = point_mlp.forward(local, net_opts(1, fz ? &fz->point_tape : nullptr));

  const Tensor& pts_feat = pass.point_tape.output;
  pass.pooled = Tensor::matrix(k, pf);
  pass.pool_argmax.assign(k * pf, 0);
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t c = 0; c < pf; ++c) {
      std::size_t best = s * g;
      double best_v = pts_feat(best, c);
      for (std::size_t j = 1; j < g; ++j) {
        const double v = pts_feat(s * g + j, c);
        if (v > best_v) {
          best_v = v;
          best = s * g + j;
        }
      }
      pass.pooled(s, c) = best_v;
      pass.pool_argmax[s * pf + c] = best;
    }
  }

  pass.vote_tape = vote_head.forward(pass.pooled, net_opts(2, fz ? &fz->vote_tape : nullptr));
  pass.feature_tape = feature_head.forward(pass.pooled, net_opts(3, fz ? &fz->feature_tape : nullptr));
  pass.decoder_tape = decoder.forward(pass.feature_tape.output, net_opts(4, fz ? &fz->decoder_tape : nullptr));
  pass.votes = pass.vote_tape.output;
  pass.features = pass.feature_tape.output;
  pass.heads = pass.decoder_tape.output;
  return pass;
}

void DetectorModel::backward(DetectorPass& pass, const Tensor& grad_votes, const Tensor& grad_heads,
                             const Tensor* grad_features) {
  Tensor g_feat = decoder.backward(pass.decoder_tape, grad_heads);
  if (grad_features) {
    if (grad_features->size() != g_feat.size()) throw nn::ShapeError("feature gradient shape mismatch");
    for (std::size_t i = 0; i < g_feat.size(); ++i) g_feat[i] += (*grad_features)[i];
  }
  Tensor g_pool = feature_head.backward(pass.feature_tape, g_feat);
  const Tensor g_pool_vote = vote_head.backward(pass.vote_tape, grad_votes);
  for (std::size_t i = 0; i < g_pool.size(); ++i) g_pool[i] += g_pool_vote[i];

  const auto pf = static_cast<std::size_t>(config_.point_features);
  Tensor g_points(pass.point_tape.output.shape());
  for (std::size_t s = 0; s < pass.size(); ++s) {
    for (std::size_t c = 0; c < pf; ++c) g_points(pass.pool_argmax[s * pf + c], c) += g_pool(s, c);
  }
  point_mlp.backward(pass.point_tape, g_points);
}

void DetectorModel::set_grl_coefficient(double coefficient) {
  config_.grl_coefficient = coefficient;
  discriminator.set_grad_reverse_coefficient(coefficient);
}

DiscPass DetectorModel::discriminate(const Tensor& features) const {
  DiscPass out;
  out.tape = discriminator.forward(features);
  out.probs.reserve(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) out.probs.push_back(nn::sigmoid(out.tape.output(i, 0)));
  return out;
}

Tensor DetectorModel::backward_discriminator(DiscPass& pass, std::span<const double> grad_logits) {
  Tensor g = Tensor::matrix(grad_logits.size(), 1);
  for (std::size_t i = 0; i < grad_logits.size(); ++i) g(i, 0) = grad_logits[i];
  return discriminator.backward(pass.tape, g);
}

std::vector<Proposal> DetectorModel::decode(const DetectorPass& pass) const {
  const HeadLayout lay = layout();
  std::vector<Proposal> out;
  out.reserve(pass.size());
  for (std::size_t k = 0; k < pass.size(); ++k) {
    const auto row = pass.heads.row(k);
    Proposal p;
    p.seed = pass.seeds[k];
    p.voted_center = pass.voted_center(k);
    p.objectness = nn::softmax(row.subspan(lay.objectness(), 2))[1];
    p.class_probs = nn::softmax(row.subspan(lay.cls(), lay.classes));
    p.class_id = static_cast<int>(std::max_element(p.class_probs.begin(), p.class_probs.end()) - p.class_probs.begin());
    const Vec3 center = p.voted_center + Vec3{row[lay.center()], row[lay.center() + 1], row[lay.center() + 2]};
    const Vec3& mean = config_.mean_sizes[static_cast<std::size_t>(p.class_id)];
    Vec3 size;
    for (std::size_t d = 0; d < 3; ++d) size[d] = std::clamp(mean[d] * std::exp(row[lay.log_size() + d]), 0.05, 5.0);
    p.box = Aabb{center, size};
    p.iou_score = nn::sigmoid(row[lay.iou()]);
    out.push_back(std::move(p));
  }
  return out;
}

json DetectorModel::manifest() const {
  return {{"kind", "ohda-detector"},
          {"version", 1},
          {"config", config_},
          {"K", config_.num_seeds},
          {"F", config_.feature_dim},
          {"C", config_.num_classes},
          {"radius", config_.radius},
          {"seed", seed_},
          {"nets",
           {{"point_mlp", point_mlp.spec()},
            {"vote_head", vote_head.spec()},
            {"feature_head", feature_head.spec()},
            {"decoder", decoder.spec()},
            {"discriminator", discriminator.spec()}}}};
}

void DetectorModel::save(const std::filesystem::path& stem, std::uint64_t step) const {
  json m = manifest();
  m["step"] = step;
  auto& self = const_cast<DetectorModel&>(*this);
  nn::save_checkpoint(stem, std::move(m), self.parameters());
}

DetectorModel DetectorModel::load(const std::filesystem::path& stem) {
  const json m = nn::read_manifest(stem);
  if (m.value("kind", "") != "ohda-detector" || m.value("version", 0) != 1) {
    throw nn::CheckpointError("not a version-1 detector checkpoint: " + stem.string());
  }
  DetectorModel model(m.at("config").get<DetectorConfig>(), m.at("seed").get<std::uint64_t>());
  if (model.manifest().at("nets") != m.at("nets")) {
    throw nn::CheckpointError("checkpoint architecture does not match its config");
  }
  nn::load_checkpoint(stem, model.parameters());
  return model;
}

std::vector<Proposal> propose(const DetectorModel& model, std::span<const Vec3> points) {
  PassOptions opts;
  opts.mode = nn::Mode::eval;
  return model.decode(model.forward(points, opts));
}

std::vector<Detection> detections_from(std::span<const Proposal> proposals, double nms_iou,
                                       double score_floor) {
  std::vector<Detection> cands;
  for (const auto& p : proposals) {
    const double cls_score = p.class_probs[static_cast<std::size_t>(p.class_id)];
    const double score = p.objectness * cls_score;
    if (score < score_floor) continue;
    cands.push_back({p.box, p.class_id, p.objectness, cls_score, p.iou_score, score});
  }
  std::vector<ScoredBox> boxes;
  boxes.reserve(cands.size());
  for (const auto& d : cands) boxes.push_back({d.box, d.class_id, d.score});
  std::vector<Detection> out;
  for (std::size_t i : nms(boxes, nms_iou)) out.push_back(cands[i]);
  return out;
}

std::vector<Detection> infer(const DetectorModel& model, std::span<const Vec3> points, double nms_iou,
                             double score_floor) {
  return detections_from(propose(model, points), nms_iou, score_floor);
}

std::vector<std::vector<Detection>> perturbed_infer(const DetectorModel& model,
                                                    std::span<const Vec3> points, double rate,
                                                    int passes, std::uint64_t seed, double nms_iou,
                                                    double score_floor) {
  if (passes < 1) throw std::invalid_argument("perturbed_infer: need at least one pass");
  if (rate < 0 || rate >= 1) throw std::invalid_argument("perturbed_infer: rate must be in [0, 1)");
  std::vector<std::vector<Detection>> out;
  for (int p = 0; p < passes; ++p) {
    PassOptions opts;
    opts.mode = nn::Mode::eval;
    opts.dropout_seed = derive_seed({seed, static_cast<std::uint64_t>(p)});
    opts.force_dropout_rate = rate;
    const auto proposals = model.decode(model.forward(points, opts));
    out.push_back(detections_from(proposals, nms_iou, score_floor));
  }
  return out;
}

}  // namespace ohda
