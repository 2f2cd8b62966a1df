#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hatebm/data.hpp"
#include "hatebm/eval.hpp"
#include "hatebm/nets.hpp"
#include "hatebm/trainer.hpp"

namespace hatebm {

struct RunOptions {
  std::size_t checkpoint_every = 500;
  std::size_t grid_every = 500;
  std::size_t grid_count = 64;
  // Pretrained generator for refine / retrofit (a model checkpoint).
  std::string generator_checkpoint;
  GapMonitorConfig monitor{};
  bool divergence_fatal = false;
};

struct SampleOptions {
  std::string checkpoint;
  std::size_t count = 64;
  std::optional<std::size_t> steps;  // overrides the training chain length
};

struct OodOptions {
  std::string checkpoint;
  std::string in_split = "test";
  std::vector<std::string> datasets;
  std::size_t count = 0;  // 0: dataset default
};

struct MetricsOptions {
  std::string checkpoint;
  ExtractorSpec extractor{};
  std::size_t samples = 10000;
  std::string split = "train";
};

// One experiment. Mode selects the training procedure (and the sampling
// procedure used by sample / metrics); verbs pick what to run.
struct ExperimentConfig {
  TrainMode mode = TrainMode::synthesis;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";
  DatasetSpec data{};
  ArchConfig arch{};
  TrainConfig train{};
  AutoencoderConfig autoencoder{};
  RunOptions run{};
  SampleOptions sample{};
  OodOptions ood{};
  MetricsOptions metrics{};

  void validate() const;
};

// Defaults for each training mode at full (CIFAR-sized) scale.
ExperimentConfig preset(TrainMode mode);

// Flat object with dotted keys, e.g. {"mode": "synthesis", "train.steps": 1000}.
// Starts from the preset of the given mode; unknown keys throw ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// All accepted keys, in canonical order.
std::vector<std::string> config_keys();

// Seeds of the independent random streams of one experiment.
std::uint64_t data_seed(const ExperimentConfig& cfg);
std::uint64_t init_seed(const ExperimentConfig& cfg);
std::uint64_t train_seed(const ExperimentConfig& cfg);
std::uint64_t sample_seed(const ExperimentConfig& cfg, std::uint64_t step);

}  // namespace hatebm
