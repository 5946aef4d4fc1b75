#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ohda/geometry.hpp"
#include "ohda/json_util.hpp"
#include "ohda/nn.hpp"

namespace ohda {

struct DetectorConfig {
  int num_classes = 4;
  int num_seeds = 32;
  int group_size = 32;
  double radius = 0.6;
  int point_hidden = 32;
  int point_features = 64;
  int feature_dim = 64;
  int head_hidden = 64;
  int disc_hidden = 32;
  double grl_coefficient = 1.0;
  double backbone_dropout = 0.0;
  std::vector<Vec3> mean_sizes;  // per class; log-size head is relative to these

  void validate() const;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DetectorConfig, num_classes, num_seeds, group_size, radius,
                                   point_hidden, point_features, feature_dim, head_hidden,
                                   disc_hidden, grl_coefficient, backbone_dropout, mean_sizes)

/// Column layout of the per-proposal decoder output.
struct HeadLayout {
  std::size_t classes;
  std::size_t objectness() const { return 0; }
  std::size_t cls() const { return 2; }
  std::size_t center() const { return 2 + classes; }
  std::size_t log_size() const { return 5 + classes; }
  std::size_t iou() const { return 8 + classes; }
  std::size_t width() const { return 9 + classes; }
};

struct Proposal {
  Vec3 seed;
  Vec3 voted_center;
  double objectness = 0.0;
  std::vector<double> class_probs;
  int class_id = 0;
  Aabb box;
  double iou_score = 0.0;
};

struct Detection {
  Aabb box;
  int class_id = 0;
  double obj_score = 0.0;
  double cls_score = 0.0;
  double iou_score = 0.0;
  double score = 0.0;  // obj_score * cls_score

  bool operator==(const Detection&) const = default;
};

struct DetectorPass;

struct PassOptions {
  std::uint64_t dropout_seed = 0;
  std::optional<double> force_dropout_rate;
  /// Evaluates as if the model were in this mode.
  std::optional<nn::Mode> mode;
  /// Replays the dropout masks of an earlier pass on the same points.
  const DetectorPass* frozen = nullptr;
};

/// Everything a forward pass records for the backward pass.
struct DetectorPass {
  std::vector<std::size_t> seed_indices;
  std::vector<Vec3> seeds;
  std::vector<std::size_t> group_points;  // K * group_size point indices
  nn::Tape point_tape;
  std::vector<std::size_t> pool_argmax;   // K * point_features rows into point_tape output
  nn::Tape vote_tape;
  nn::Tape feature_tape;
  nn::Tape decoder_tape;
  nn::Tensor pooled;    // [K, point_features]
  nn::Tensor votes;     // [K, 3]
  nn::Tensor features;  // [K, feature_dim]
  nn::Tensor heads;     // [K, HeadLayout::width()]

  std::size_t size() const { return seeds.size(); }
  Vec3 voted_center(std::size_t k) const {
    return seeds[k] + Vec3{votes(k, 0), votes(k, 1), votes(k, 2)};
  }
};

struct DiscPass {
  nn::Tape tape;
  std::vector<double> probs;  // sigmoid of logits
};

/// Farthest point sampling from index 0 (ties to the lower index).
std::vector<std::size_t> fps(std::span<const Vec3> points, std::size_t k);

/// Ball query with stride subsampling down to `group_size` and repeat-padding
/// with the seed itself.
std::vector<std::size_t> group_neighbors(std::span<const Vec3> points, std::size_t seed_index,
                                         double radius, std::size_t group_size);

class DetectorModel {
 public:
  DetectorModel() = default;
  DetectorModel(DetectorConfig config, std::uint64_t seed);

  const DetectorConfig& config() const { return config_; }
  HeadLayout layout() const { return {static_cast<std::size_t>(config_.num_classes)}; }

  nn::Net point_mlp;      // shared per-point encoder
  nn::Net vote_head;      // pooled feature -> 3-d offset
  nn::Net feature_head;   // pooled feature -> proposal feature
  nn::Net decoder;        // proposal feature -> heads
  nn::Net discriminator;  // GradReverse + MLP -> 1 logit

  std::vector<nn::ParamRef> parameters();           // all nets, discriminator last
  std::vector<nn::ParamRef> detector_parameters();  // without the discriminator
  std::vector<nn::ParamRef> backbone_parameters();  // point_mlp, vote_head, feature_head
  std::size_t num_parameters() const;
  void zero_grad();
  void set_mode(nn::Mode mode);
  /// Sets the reversal coefficient in both the config and the discriminator.
  void set_grl_coefficient(double coefficient);
  nn::Mode mode() const { return point_mlp.mode; }

  DetectorPass forward(std::span<const Vec3> points, const PassOptions& opts = {}) const;
  /// Backpropagates head, vote and extra feature gradients into every detector net.
  void backward(DetectorPass& pass, const nn::Tensor& grad_votes, const nn::Tensor& grad_heads,
                const nn::Tensor* grad_features = nullptr);

  DiscPass discriminate(const nn::Tensor& features) const;
  /// Returns the gradient reaching the proposal features (already reversed).
  nn::Tensor backward_discriminator(DiscPass& pass, std::span<const double> grad_logits);

  std::vector<Proposal> decode(const DetectorPass& pass) const;

  json manifest() const;
  void save(const std::filesystem::path& stem, std::uint64_t step = 0) const;
  static DetectorModel load(const std::filesystem::path& stem);

 private:
  DetectorConfig config_;
  std::uint64_t seed_ = 0;
};

/// Proposals = seeds; decoding of every proposal for one scene.
std::vector<Proposal> propose(const DetectorModel& model, std::span<const Vec3> points);

std::vector<Detection> detections_from(std::span<const Proposal> proposals, double nms_iou,
                                       double score_floor);

/// Eval-mode inference: decode, score floor, class-agnostic NMS.
std::vector<Detection> infer(const DetectorModel& model, std::span<const Vec3> points,
                             double nms_iou = 0.25, double score_floor = 0.05);

/// P inference passes with backbone dropout forced on at `rate`.
std::vector<std::vector<Detection>> perturbed_infer(const DetectorModel& model,
                                                    std::span<const Vec3> points, double rate,
                                                    int passes, std::uint64_t seed,
                                                    double nms_iou = 0.25, double score_floor = 0.05);

}  // namespace ohda
