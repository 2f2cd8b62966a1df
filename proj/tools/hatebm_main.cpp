// Command-line front end: hatebm <verb> [--config FILE] [flags]
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "hatebm/commands.hpp"
#include "hatebm/error.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::string> out;
  bool resume = false;
  std::optional<std::string> checkpoint;
  std::optional<std::size_t> count;
  std::optional<std::size_t> mcmc_steps;
  std::vector<std::string> datasets;
  std::optional<std::string> extractor;
};

void common_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "experiment config (flat JSON with dotted keys)");
  app->add_option("--seed", f.seed, "global seed (overrides the config)");
  app->add_option("--out", f.out, "output directory (overrides the config)");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hatebm::ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hat EBM toolkit"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "train a model (mode from the config)");
  common_flags(train, f);
  train->add_option("--steps", f.steps, "total training steps");
  train->add_flag("--resume", f.resume, "continue from <out>/checkpoints/latest.ckpt");

  auto* sample = app.add_subcommand("sample", "draw samples from a checkpoint");
  common_flags(sample, f);
  sample->add_option("--checkpoint", f.checkpoint, "training or model checkpoint");
  sample->add_option("--count", f.count, "number of samples");
  sample->add_option("--steps", f.mcmc_steps, "chain length override (0: generator only)");

  auto* ood = app.add_subcommand("ood", "score datasets with the hat network and report AUROC");
  common_flags(ood, f);
  ood->add_option("--checkpoint", f.checkpoint, "training or model checkpoint");
  ood->add_option("--datasets", f.datasets, "OOD datasets (source or source@split)");
  ood->add_option("--count", f.count, "images per dataset");

  auto* metrics = app.add_subcommand("metrics", "Frechet distance between data and model samples");
  common_flags(metrics, f);
  metrics->add_option("--checkpoint", f.checkpoint, "training checkpoint");
  metrics->add_option("--extractor", f.extractor, "flatten | random_conv | encoder");
  metrics->add_option("--count", f.count, "samples per side");

  auto* ae = app.add_subcommand("pretrain-ae", "train an inference/generator autoencoder");
  common_flags(ae, f);

  CLI11_PARSE(app, argc, argv);

  try {
    const std::string text = f.config.empty() ? std::string("{}\n") : read_text(f.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw hatebm::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw hatebm::ConfigError("config must be a JSON object");
    if (f.seed) j["seed"] = *f.seed;
    if (f.out) j["out_dir"] = *f.out;
    if (f.steps) j["train.steps"] = *f.steps;
    std::string prefix;
    if (sample->parsed()) prefix = "sample";
    if (ood->parsed()) prefix = "ood";
    if (metrics->parsed()) prefix = "metrics";
    if (!prefix.empty() && f.checkpoint) j[prefix + ".checkpoint"] = *f.checkpoint;
    if (sample->parsed() && f.count) j["sample.count"] = *f.count;
    if (sample->parsed() && f.mcmc_steps) j["sample.steps"] = *f.mcmc_steps;
    if (ood->parsed() && !f.datasets.empty()) j["ood.datasets"] = f.datasets;
    if (ood->parsed() && f.count) j["ood.count"] = *f.count;
    if (metrics->parsed() && f.extractor) j["metrics.extractor"] = *f.extractor;
    if (metrics->parsed() && f.count) j["metrics.samples"] = *f.count;

    const hatebm::ExperimentConfig cfg = hatebm::config_from_json(j);
    if (train->parsed()) return hatebm::cmd_train(cfg, text, f.resume, std::cout);
    if (sample->parsed()) return hatebm::cmd_sample(cfg, text, std::cout);
    if (ood->parsed()) return hatebm::cmd_ood(cfg, text, std::cout);
    if (metrics->parsed()) return hatebm::cmd_metrics(cfg, text, std::cout);
    return hatebm::cmd_pretrain_ae(cfg, text, std::cout);
  } catch (const hatebm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hatebm::kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hatebm::kExitError;
  }
}
