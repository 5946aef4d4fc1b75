// Command-line front end: gen-data, pretrain, adapt, eval, ablate.
//
// Precedence: built-in defaults < --config file < flags.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "ohda/cli.hpp"
#include "ohda/log.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::optional<int> epochs;
  bool no_oaa = false, no_vss = false, no_cla = false, no_hla = false, no_pcat = false, no_mpr = false;
};

void add_common(CLI::App* cmd, Flags& f, const std::string& default_out) {
  cmd->add_option("--config", f.config, "JSON config file overlaid on the defaults")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Training seed (data seed for gen-data)");
  f.out = default_out;
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_option("--data", f.data, "Dataset root written by gen-data (overrides data.dir)");
}

void add_training(CLI::App* cmd, Flags& f) {
  cmd->add_option("--epochs", f.epochs, "Epoch count for this command");
  cmd->add_flag("--no-oaa", f.no_oaa, "Disable object-aware augmentation");
  cmd->add_flag("--no-vss", f.no_vss, "Disable virtual scan simulation");
  cmd->add_flag("--no-cla", f.no_cla, "Disable pseudo-label (class-level) alignment");
  cmd->add_flag("--no-hla", f.no_hla, "Disable adversarial (holistic) alignment");
  cmd->add_flag("--no-pcat", f.no_pcat, "Use fixed thresholds instead of progressive ones");
  cmd->add_flag("--no-mpr", f.no_mpr, "Disable perturbation-based reweighting");
}

ohda::RunConfig resolve(const Flags& f, const std::string& command) {
  ohda::RunConfig cfg = ohda::load_run_config(f.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(f.config));
  if (f.seed) (command == "gen-data" ? cfg.data.seed : cfg.train.seed) = *f.seed;
  if (!f.data.empty()) cfg.data.dir = f.data;
  if (f.epochs) (command == "pretrain" ? cfg.train.pretrain_epochs : cfg.train.adapt_epochs) = *f.epochs;
  auto& t = cfg.train.toggles;
  if (f.no_oaa) t.oaa = false;
  if (f.no_vss) t.vss = false;
  if (f.no_cla) t.cla = false;
  if (f.no_hla) t.hla = false;
  if (f.no_pcat) t.pcat = false;
  if (f.no_mpr) t.mpr = false;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic-to-real domain adaptation for toy 3D detection"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "Generate source/target train and eval splits");
  add_common(gen, f, "data");
  auto* pre = app.add_subcommand("pretrain", "Train the detector on augmented source scenes");
  add_common(pre, f, "runs/pretrain");
  add_training(pre, f);
  auto* ada = app.add_subcommand("adapt", "Adapt a pretrained checkpoint to the target domain");
  add_common(ada, f, "runs/adapt");
  add_training(ada, f);
  ada->add_option("--checkpoint", f.checkpoint, "Pretrained checkpoint stem")->required();
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  add_common(ev, f, "runs/eval");
  ev->add_option("--checkpoint", f.checkpoint, "Checkpoint stem")->required();
  auto* abl = app.add_subcommand("ablate", "Run the configured ablation variants");
  add_common(abl, f, "runs/ablate");
  add_training(abl, f);
  abl->add_option("--checkpoint", f.checkpoint, "Pretrained checkpoint stem")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    ohda::init_logging();
    const std::filesystem::path out = f.out;
    if (gen->parsed()) {
      ohda::cmd_gen_data(resolve(f, "gen-data"), out);
    } else if (pre->parsed()) {
      ohda::cmd_pretrain(resolve(f, "pretrain"), out);
    } else if (ada->parsed()) {
      ohda::cmd_adapt(resolve(f, "adapt"), f.checkpoint, out);
    } else if (ev->parsed()) {
      ohda::cmd_eval(resolve(f, "eval"), f.checkpoint, out);
    } else if (abl->parsed()) {
      const auto rows = ohda::cmd_ablate(resolve(f, "ablate"), f.checkpoint, out);
      std::cout << ohda::ablation_table(rows);
    }
  } catch (const ohda::TrainingAborted& e) {
    std::cerr << "error: " << e.what() << '\n' << e.diagnostics.dump(2) << '\n';
    return 3;
  } catch (const ohda::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
