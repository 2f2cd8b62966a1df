#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "hatebm/config.hpp"
#include "hatebm/trainer.hpp"

namespace hatebm {

// Exit codes of the command layer.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNumeric = 2;
inline constexpr int kExitDiverged = 3;

// Models stored in a training or model checkpoint, with the mode they were
// trained in (synthesis for bare model checkpoints).
struct LoadedModels {
  TrainMode mode = TrainMode::synthesis;
  Model hat;
  Model generator;
  bool has_generator = false;
};

LoadedModels load_models(const std::filesystem::path& checkpoint, const ArchConfig* expected = nullptr);

// Hex digest naming a run; derived from the resolved configuration.
std::string run_id(const ExperimentConfig& cfg);

// Writes the config text verbatim (plus the resolved form) into cfg.out_dir.
void freeze_config(const ExperimentConfig& cfg, const std::string& config_text);

// Hat energies of `images`, computed in chunks.
std::vector<double> score_images(const Model& hat, const Tensor& images, std::size_t chunk = 256);

// "source" or "source@split" -> dataset spec derived from `base`.
DatasetSpec dataset_ref(const DatasetSpec& base, const std::string& ref, const std::string& default_split);

int cmd_train(const ExperimentConfig& cfg, const std::string& config_text, bool resume, std::ostream& log);
int cmd_sample(const ExperimentConfig& cfg, const std::string& config_text, std::ostream& log);
int cmd_ood(const ExperimentConfig& cfg, const std::string& config_text, std::ostream& log);
int cmd_metrics(const ExperimentConfig& cfg, const std::string& config_text, std::ostream& log);
int cmd_pretrain_ae(const ExperimentConfig& cfg, const std::string& config_text, std::ostream& log);

}  // namespace hatebm
