#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ohda/eval.hpp"
#include "ohda/scene.hpp"
#include "ohda/trainer.hpp"

namespace ohda {

struct DataConfig {
  std::uint64_t seed = 0;
  int source_train = 200;
  int source_eval = 50;
  int target_train = 200;
  int target_eval = 50;
  std::string dir = "data";  // dataset root read by the training commands
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DataConfig, seed, source_train, source_eval, target_train, target_eval, dir)

struct AblationVariant {
  std::string name;
  Toggles toggles;
  bool train = true;  // false: evaluate the checkpoint as is
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AblationVariant, name, toggles, train)

/// Default ablation list: source-only, HLA-only, CLA-only, CLA without PCAT/MPR, full.
std::vector<AblationVariant> default_ablation();

struct RunConfig {
  DomainSpec source = default_source_spec();
  DomainSpec target = default_target_spec();
  DataConfig data;
  TrainConfig train;
  std::vector<AblationVariant> ablation = default_ablation();
  std::string eval_split = "target_eval";

  void validate() const;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunConfig, source, target, data, train, ablation, eval_split)

/// Defaults overlaid with `overrides`; unknown keys and invalid values raise ConfigError.
RunConfig run_config_from_json(const json& overrides);
/// Defaults overlaid with a JSON config file (unknown keys rejected).
RunConfig load_run_config(const std::optional<std::filesystem::path>& path);

/// Writes `<out>/run.json` with the command and the fully resolved config.
void write_run_json(const std::filesystem::path& out, const std::string& command, const RunConfig& cfg,
                    const json& extra = json::object());

struct DataSplits {
  Dataset source_train, source_eval, target_train, target_eval;
};
DataSplits generate_splits(const RunConfig& cfg);
DataSplits load_splits(const std::filesystem::path& root);

void cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out);
/// Returns the target-eval report of the pretrained model.
MetricsReport cmd_pretrain(const RunConfig& cfg, const std::filesystem::path& out);
/// Returns the target-eval report of the adapted teacher.
MetricsReport cmd_adapt(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out);
MetricsReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out);

struct AblationRow {
  std::string name;
  Toggles toggles;
  double map25 = 0.0;
  double map50 = 0.0;
};
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                    const std::filesystem::path& out);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace ohda
