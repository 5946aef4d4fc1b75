#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ohda/detector.hpp"
#include "ohda/scene.hpp"

namespace ohda {

enum class Positivity { positive, negative, ignored };

struct Assignment {
  std::vector<std::optional<std::size_t>> gt_index;  // nearest GT per proposal
  std::vector<Positivity> positivity;
  std::vector<std::optional<Vec3>> vote_target;  // for seeds lying inside a GT box
};

struct AssignParams {
  double positive_radius = 0.3;
  double negative_radius = 0.6;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AssignParams, positive_radius, negative_radius)

struct LossWeights {
  double hla = 0.1;
  double cla = 1.0;
  double grl = 1.0;
  double vote = 1.0;
  double objectness = 0.5;
  double center = 1.0;
  double size = 1.0;
  double semantic = 0.1;
  double iou_head = 1.0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossWeights, hla, cla, grl, vote, objectness, center, size,
                                   semantic, iou_head)

/// Weighted components of the supervised loss; `total` is their sum.
struct SupervisedReport {
  double vote = 0.0;
  double objectness = 0.0;
  double center = 0.0;
  double size = 0.0;
  double semantic = 0.0;
  double iou_head = 0.0;
  double total = 0.0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SupervisedReport, vote, objectness, center, size, semantic, iou_head, total)

struct LossReport {
  double sup = 0.0;
  double hla = 0.0;
  double cla = 0.0;
  double total = 0.0;
  SupervisedReport sup_parts;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossReport, sup, hla, cla, total, sup_parts)

/// Loss value with gradients for the detector's vote and head outputs.
struct HeadLoss {
  double loss = 0.0;
  nn::Tensor grad_votes;
  nn::Tensor grad_heads;
};

struct SupervisedLoss {
  SupervisedReport report;
  nn::Tensor grad_votes;
  nn::Tensor grad_heads;
};

Assignment assign_targets(std::span<const Vec3> voted_centers, std::span<const Vec3> seeds,
                          std::span<const SceneObject> gt, const AssignParams& params = {});

/// Assignment plus IoU-head targets (IoU of the detached decoded box with its GT).
struct SupervisedTargets {
  Assignment assignment;
  std::vector<double> iou_target;  // per proposal, 0 unless positive
};

SupervisedTargets supervised_targets(const DetectorModel& model, const DetectorPass& pass,
                                     std::span<const SceneObject> gt, const AssignParams& assign = {});

/// Loss against fixed targets; the targets are constants for differentiation.
SupervisedLoss supervised_loss(const DetectorModel& model, const DetectorPass& pass,
                               std::span<const SceneObject> gt, const SupervisedTargets& targets,
                               const LossWeights& weights);

SupervisedLoss supervised_loss(const DetectorModel& model, const DetectorPass& pass,
                               std::span<const SceneObject> gt, const LossWeights& weights,
                               const AssignParams& assign = {});

/// Pseudo target for one student proposal.
struct PseudoTarget {
  Aabb box;
  int class_id = 0;
  double weight = 1.0;  // MPR weight
};

/// Per-proposal pseudo-label terms (center + size smooth-L1 and semantic CE),
/// without reduction; entries are 0 where `targets` is empty.
std::vector<double> unsupervised_terms(const DetectorModel& model, const DetectorPass& pass,
                                       std::span<const std::optional<PseudoTarget>> targets);

/// Weighted mean sum(w * l) / sum(w); 0 when the weights sum to 0.
double weighted_mean(std::span<const double> losses, std::span<const double> weights);

/// MPR-weighted pseudo-label loss over masked proposals with gradients.
HeadLoss unsupervised_loss(const DetectorModel& model, const DetectorPass& pass,
                           std::span<const std::optional<PseudoTarget>> targets);

struct HlaLoss {
  double loss = 0.0;
  std::vector<double> grad_source_logits;
  std::vector<double> grad_target_logits;
};

/// Mean binary cross-entropy of the proposal discriminator, source = 0, target = 1.
HlaLoss hla_loss(std::span<const double> source_probs, std::span<const double> target_probs);

LossReport total_loss(const SupervisedReport& sup, double hla, double cla, const LossWeights& w);

}  // namespace ohda
