#include "ohda/losses.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace ohda {

using nn::Tensor;

namespace {

// Huber of (pred - target) / scale summed over xyz, with d/d pred.
double scaled_huber3(const Vec3& pred, const Vec3& target, const Vec3& scale, Vec3* grad) {
  double loss = 0.0;
  for (std::size_t d = 0; d < 3; ++d) {
    const double r = (pred[d] - target[d]) / scale[d];
    loss += nn::huber(r);
    if (grad) (*grad)[d] = nn::huber_grad(r) / scale[d];
  }
  return loss;
}

// Cross-entropy of one logit row against `target`, gradient written into `grad`.
double row_ce(std::span<const double> logits, int target, std::span<double> grad) {
  const auto p = nn::softmax(logits);
  for (std::size_t k = 0; k < p.size(); ++k) grad[k] = p[k] - (static_cast<int>(k) == target ? 1.0 : 0.0);
  return -std::log(std::max(p[static_cast<std::size_t>(target)], 1e-300));
}

Vec3 head_vec(std::span<const double> row, std::size_t at) { return {row[at], row[at + 1], row[at + 2]}; }

Vec3 log_ratio(const Vec3& size, const Vec3& mean) {
  return {std::log(size.x / mean.x), std::log(size.y / mean.y), std::log(size.z / mean.z)};
}

// Center and log-size regression against `box` plus semantic CE against `cls`.
// Gradients are scaled by `scale` and accumulated into the head / vote rows.
struct BoxTerms {
  double center = 0.0;
  double size = 0.0;
  double semantic = 0.0;
};

BoxTerms box_terms(const DetectorModel& model, const DetectorPass& pass, std::size_t k, const Aabb& box,
                   int cls, double center_scale, double size_scale, double sem_scale, Tensor* grad_heads,
                   Tensor* grad_votes) {
  const HeadLayout lay = model.layout();
  const auto row = pass.heads.row(k);
  const Vec3& mean = model.config().mean_sizes.at(static_cast<std::size_t>(cls));
  BoxTerms t;

  const Vec3 pred_center = pass.voted_center(k) + head_vec(row, lay.center());
  Vec3 gc;
  t.center = scaled_huber3(pred_center, box.center, mean, &gc);

  Vec3 gs;
  t.size = scaled_huber3(head_vec(row, lay.log_size()), log_ratio(box.size, mean), {1, 1, 1}, &gs);

  std::vector<double> gcls(lay.classes);
  t.semantic = row_ce(row.subspan(lay.cls(), lay.classes), cls, gcls);

  if (grad_heads) {
    for (std::size_t d = 0; d < 3; ++d) {
      (*grad_heads)(k, lay.center() + d) += center_scale * gc[d];
      (*grad_votes)(k, d) += center_scale * gc[d];
      (*grad_heads)(k, lay.log_size() + d) += size_scale * gs[d];
    }
    for (std::size_t c = 0; c < lay.classes; ++c) (*grad_heads)(k, lay.cls() + c) += sem_scale * gcls[c];
  }
  return t;
}

}  // namespace

Assignment assign_targets(std::span<const Vec3> voted_centers, std::span<const Vec3> seeds,
                          std::span<const SceneObject> gt, const AssignParams& params) {
  const std::size_t n = voted_centers.size();
  Assignment a;
  a.gt_index.assign(n, std::nullopt);
  a.positivity.assign(n, Positivity::negative);
  a.vote_target.assign(seeds.size(), std::nullopt);
  if (gt.empty()) return a;

  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double d = (voted_centers[i] - gt[g].box.center).norm();
      if (d < best_d) best_d = d, best = g;
    }
    a.gt_index[i] = best;
    if (best_d <= params.positive_radius) {
      a.positivity[i] = Positivity::positive;
    } else if (best_d > params.negative_radius) {
      a.positivity[i] = Positivity::negative;
    } else {
      a.positivity[i] = Positivity::ignored;
    }
  }

  // On-object seeds vote for the containing box whose center is nearest.
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& obj : gt) {
      if (!obj.box.contains(seeds[i])) continue;
      const double d = (seeds[i] - obj.box.center).norm();
      if (d < best_d) best_d = d, a.vote_target[i] = obj.box.center;
    }
  }
  return a;
}

SupervisedTargets supervised_targets(const DetectorModel& model, const DetectorPass& pass,
                                     std::span<const SceneObject> gt, const AssignParams& assign) {
  const std::size_t n = pass.size();
  std::vector<Vec3> voted(n);
  for (std::size_t k = 0; k < n; ++k) voted[k] = pass.voted_center(k);
  SupervisedTargets t{assign_targets(voted, pass.seeds, gt, assign), std::vector<double>(n, 0.0)};
  const auto decoded = model.decode(pass);
  for (std::size_t k = 0; k < n; ++k) {
    if (t.assignment.positivity[k] == Positivity::positive) {
      t.iou_target[k] = iou(decoded[k].box, gt[*t.assignment.gt_index[k]].box);
    }
  }
  return t;
}

SupervisedLoss supervised_loss(const DetectorModel& model, const DetectorPass& pass,
                               std::span<const SceneObject> gt, const LossWeights& w,
                               const AssignParams& assign) {
  return supervised_loss(model, pass, gt, supervised_targets(model, pass, gt, assign), w);
}

SupervisedLoss supervised_loss(const DetectorModel& model, const DetectorPass& pass,
                               std::span<const SceneObject> gt, const SupervisedTargets& targets,
                               const LossWeights& w) {
  const std::size_t n = pass.size();
  const HeadLayout lay = model.layout();
  SupervisedLoss out{{}, Tensor::matrix(n, 3), Tensor::matrix(n, lay.width())};
  const Assignment& a = targets.assignment;
  if (a.positivity.size() != n) throw std::invalid_argument("supervised_loss: targets do not match the pass");

  // Votes: on-object seeds regress their offset to the GT center.
  std::size_t n_vote = 0;
  for (const auto& t : a.vote_target) n_vote += t.has_value();
  for (std::size_t k = 0; k < n && n_vote > 0; ++k) {
    if (!a.vote_target[k]) continue;
    const double scale = w.vote / static_cast<double>(n_vote);
    for (std::size_t d = 0; d < 3; ++d) {
      const double r = pass.votes(k, d) - ((*a.vote_target[k])[d] - pass.seeds[k][d]);
      out.report.vote += scale * nn::huber(r);
      out.grad_votes(k, d) += scale * nn::huber_grad(r);
    }
  }

  // Objectness over positives and negatives.
  std::size_t n_obj = 0, n_pos = 0;
  for (auto p : a.positivity) {
    n_obj += p != Positivity::ignored;
    n_pos += p == Positivity::positive;
  }
  std::vector<double> g2(2);
  for (std::size_t k = 0; k < n && n_obj > 0; ++k) {
    if (a.positivity[k] == Positivity::ignored) continue;
    const double scale = w.objectness / static_cast<double>(n_obj);
    const int label = a.positivity[k] == Positivity::positive ? 1 : 0;
    out.report.objectness += scale * row_ce(pass.heads.row(k).subspan(lay.objectness(), 2), label, g2);
    for (std::size_t c = 0; c < 2; ++c) out.grad_heads(k, lay.objectness() + c) += scale * g2[c];
  }

  // Box, semantic and IoU-head terms over positives.
  if (n_pos > 0) {
    const double inv = 1.0 / static_cast<double>(n_pos);
    for (std::size_t k = 0; k < n; ++k) {
      if (a.positivity[k] != Positivity::positive) continue;
      const auto& obj = gt[*a.gt_index[k]];
      const BoxTerms t = box_terms(model, pass, k, obj.box, obj.class_id, w.center * inv, w.size * inv,
                                   w.semantic * inv, &out.grad_heads, &out.grad_votes);
      out.report.center += w.center * inv * t.center;
      out.report.size += w.size * inv * t.size;
      out.report.semantic += w.semantic * inv * t.semantic;

      const double target = targets.iou_target[k];
      const double s = nn::sigmoid(pass.heads(k, lay.iou()));
      out.report.iou_head += w.iou_head * inv * nn::huber(s - target);
      out.grad_heads(k, lay.iou()) += w.iou_head * inv * nn::huber_grad(s - target) * s * (1.0 - s);
    }
  }

  auto& r = out.report;
  r.total = r.vote + r.objectness + r.center + r.size + r.semantic + r.iou_head;
  return out;
}

std::vector<double> unsupervised_terms(const DetectorModel& model, const DetectorPass& pass,
                                       std::span<const std::optional<PseudoTarget>> targets) {
  if (targets.size() != pass.size()) throw std::invalid_argument("unsupervised_terms: one target slot per proposal");
  std::vector<double> out(pass.size(), 0.0);
  for (std::size_t k = 0; k < pass.size(); ++k) {
    if (!targets[k]) continue;
    const BoxTerms t = box_terms(model, pass, k, targets[k]->box, targets[k]->class_id, 0, 0, 0, nullptr, nullptr);
    out[k] = t.center + t.size + t.semantic;
  }
  return out;
}

double weighted_mean(std::span<const double> losses, std::span<const double> weights) {
  if (losses.size() != weights.size()) throw std::invalid_argument("weighted_mean: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    num += weights[i] * losses[i];
    den += weights[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

HeadLoss unsupervised_loss(const DetectorModel& model, const DetectorPass& pass,
                           std::span<const std::optional<PseudoTarget>> targets) {
  if (targets.size() != pass.size()) throw std::invalid_argument("unsupervised_loss: one target slot per proposal");
  const std::size_t n = pass.size();
  HeadLoss out{0.0, Tensor::matrix(n, 3), Tensor::matrix(n, model.layout().width())};
  double wsum = 0.0;
  for (const auto& t : targets) {
    if (t) wsum += t->weight;
  }
  if (wsum <= 0.0) return out;
  for (std::size_t k = 0; k < n; ++k) {
    if (!targets[k]) continue;
    const double scale = targets[k]->weight / wsum;
    const BoxTerms t = box_terms(model, pass, k, targets[k]->box, targets[k]->class_id, scale, scale, scale,
                                 &out.grad_heads, &out.grad_votes);
    out.loss += scale * (t.center + t.size + t.semantic);
  }
  return out;
}

HlaLoss hla_loss(std::span<const double> source_probs, std::span<const double> target_probs) {
  HlaLoss out;
  const std::size_t total = source_probs.size() + target_probs.size();
  out.grad_source_logits.assign(source_probs.size(), 0.0);
  out.grad_target_logits.assign(target_probs.size(), 0.0);
  if (total == 0) return out;
  const double inv = 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < source_probs.size(); ++i) {
    const auto b = nn::binary_ce(source_probs[i], 0);
    out.loss += inv * b.loss;
    out.grad_source_logits[i] = inv * b.grad;
  }
  for (std::size_t i = 0; i < target_probs.size(); ++i) {
    const auto b = nn::binary_ce(target_probs[i], 1);
    out.loss += inv * b.loss;
    out.grad_target_logits[i] = inv * b.grad;
  }
  return out;
}

LossReport total_loss(const SupervisedReport& sup, double hla, double cla, const LossWeights& w) {
  LossReport r;
  r.sup = sup.total;
  r.sup_parts = sup;
  r.hla = hla;
  r.cla = cla;
  r.total = sup.total + w.hla * hla + w.cla * cla;
  return r;
}

}  // namespace ohda
