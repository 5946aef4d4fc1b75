#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ohda/augment.hpp"
#include "ohda/detector.hpp"
#include "ohda/eval.hpp"
#include "ohda/losses.hpp"
#include "ohda/nn.hpp"
#include "ohda/pseudo.hpp"
#include "ohda/scene.hpp"

namespace ohda {

struct Toggles {
  bool oaa = true;
  bool vss = true;
  bool cla = true;
  bool hla = true;
  bool pcat = true;
  bool mpr = true;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Toggles, oaa, vss, cla, hla, pcat, mpr)

struct TrainConfig {
  std::uint64_t seed = 0;
  int pretrain_epochs = 30;
  int adapt_epochs = 40;
  int source_per_step = 1;
  int target_per_step = 1;
  nn::AdamConfig adam;
  double ema_momentum = 0.99;
  LossWeights weights;
  AssignParams assign;
  AugmentParams augment;
  PseudoParams pseudo;
  /// Thresholds applied to every class when progressive thresholding is off.
  MetricTriple fixed_thresholds = {0.5, 0.5, 0.3};
  Toggles toggles;
  DetectorConfig detector;
  /// Target-eval cadence in adapt epochs; the last epoch is always evaluated.
  int eval_every = 5;

  void validate() const;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, seed, pretrain_epochs, adapt_epochs, source_per_step,
                                   target_per_step, adam, ema_momentum, weights, assign, augment, pseudo,
                                   fixed_thresholds, toggles, detector, eval_every)

/// Raised when a loss turns non-finite; `diagnostics` names step, scene and components.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, json diagnostics)
      : std::runtime_error(what), diagnostics(std::move(diagnostics)) {}
  json diagnostics;
};

/// Append-only JSON-lines sink; a default-constructed log discards records.
class JsonlLog {
 public:
  JsonlLog() = default;
  explicit JsonlLog(const std::filesystem::path& path);
  void write(const json& record);

 private:
  std::optional<std::ofstream> out_;
};

/// Per-class mean box size over a labeled dataset (unit size for absent classes).
std::vector<Vec3> class_mean_sizes(const Dataset& ds);

/// Source scene as the trainer sees it for one step (augmented per toggles).
Scene source_view(const Scene& scene, const ObjectBank& bank, const TrainConfig& cfg, std::uint64_t seed);

struct PretrainResult {
  DetectorModel model;
  std::vector<double> step_losses;  // supervised total per step
};

PretrainResult pretrain(const TrainConfig& cfg, const Dataset& source, JsonlLog* log = nullptr);

struct TrainState {
  DetectorModel student;
  DetectorModel teacher;
  nn::Adam adam;
  ThresholdState thresholds;
  int epoch = 0;          // completed adapt epochs
  std::uint64_t step = 0;  // completed adapt steps
  json history = json::array();
};

TrainState adapt_init(const TrainConfig& cfg, const DetectorModel& pretrained, const Dataset& target_train);

/// One pass over the target training set; evaluates on `target_eval` when due.
void adapt_epoch(TrainState& state, const TrainConfig& cfg, const Dataset& source, const Dataset& target_train,
                 const Dataset* target_eval, JsonlLog* log = nullptr);

/// Runs the remaining epochs up to cfg.adapt_epochs.
void adapt(TrainState& state, const TrainConfig& cfg, const Dataset& source, const Dataset& target_train,
           const Dataset* target_eval, JsonlLog* log = nullptr);

/// Thresholds currently used for filtering (progressive or fixed).
Thresholds active_thresholds(const TrainState& state, const TrainConfig& cfg);

void save_state(const TrainState& state, const std::filesystem::path& dir);
TrainState load_state(const std::filesystem::path& dir);

}  // namespace ohda
