#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hatebm/data.hpp"
#include "hatebm/energy.hpp"
#include "hatebm/nets.hpp"
#include "hatebm/optim.hpp"
#include "hatebm/rng.hpp"
#include "hatebm/sampler.hpp"

namespace hatebm {

// Fixed-capacity store of past (X, Z) model states. Every stored X was the
// generator output for its Z at some earlier step plus a sampled residual.
class SampleBank {
 public:
  SampleBank() = default;
  SampleBank(ImageBatch x, LatentBatch z);

  std::size_t capacity() const { return x_.batch(); }
  std::size_t occupancy() const { return capacity(); }
  const ImageBatch& x() const { return x_; }
  const LatentBatch& z() const { return z_; }

  struct Drawn {
    std::vector<std::size_t> indices;
    ImageBatch x;
    LatentBatch z;
  };

  Drawn draw(std::size_t count, Rng& rng) const;
  void overwrite(const std::vector<std::size_t>& indices, const ImageBatch& x, const LatentBatch& z);

 private:
  ImageBatch x_;
  LatentBatch z_;
};

// Z ~ N(0, I), X = G(Z); generated in chunks to bound memory.
SampleBank bank_init(std::size_t capacity, const Model& generator, Rng& rng, std::size_t chunk = 256);

// Draws new_x.batch() pairs at unique random slots, then writes the new
// pairs into those same slots.
SampleBank::Drawn bank_draw_replace(SampleBank& bank, const ImageBatch& new_x, const LatentBatch& new_z, Rng& rng);

enum class TrainMode { synthesis, refine, retrofit };

const char* to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct AnnealSchedule {
  std::optional<std::size_t> step;  // first step trained at the reduced rate
  double factor = 10.0;
};

struct TrainConfig {
  TrainMode mode = TrainMode::synthesis;
  std::size_t batch_size = 128;
  std::size_t steps = 75000;
  OptimizerSpec hat_optimizer{};
  OptimizerSpec gen_optimizer{};
  LangevinConfig langevin{};
  double epsilon_data = 1e-3;
  std::size_t bank_capacity = 10000;
  double tau = 1.0 / std::sqrt(2.0);
  AnnealSchedule anneal{};

  // refine / retrofit negatives: joint (optionally with prior) or the
  // generator-only ablation.
  EnergyKind energy = EnergyKind::joint;
  std::optional<double> prior_sigma;
  PriorPlacement prior_on = PriorPlacement::y;

  // Cooperative-learning baseline: re-infer bank latents with this many
  // latent Langevin steps before the generator update. 0 disables it.
  std::size_t inference_steps = 0;
  double inference_eps = 0.1;

  void validate() const;
};

struct MetricRow {
  std::size_t step = 0;
  double ebm_loss = 0.0;
  double gen_loss = 0.0;
  double energy_gap = 0.0;
  double hat_grad_norm = 0.0;
  double gen_grad_norm = 0.0;
  double pos_energy = 0.0;
  double neg_energy = 0.0;
};

struct TrainState {
  Model hat;
  Model generator;
  Optimizer hat_opt;
  Optimizer gen_opt;
  SampleBank bank;  // empty outside synthesis mode
  std::size_t step = 0;
  Rng rng;
  std::vector<MetricRow> log;
  // Position of the positive-sample stream, so a resumed run sees the same batches.
  std::size_t data_epoch = 0;
  std::size_t data_cursor = 0;
};

// Fresh state: optimizers for both nets and, in synthesis mode, a bank
// generated from the initial generator.
TrainState make_train_state(Model hat, Model generator, const TrainConfig& cfg, Rng rng);

struct LossAndGrad {
  double loss = 0.0;
  ParamSet grad;
  double pos_mean = 0.0;
  double neg_mean = 0.0;
};

// mean H(x_pos) - mean H(x_neg) and its gradient in the hat parameters.
LossAndGrad ebm_loss(const ImageBatch& x_pos, const ImageBatch& x_neg, const Model& hat);

// (1/n) sum_i |G(z_i) - x_i|^2 / (2 tau^2) and its generator-parameter gradient.
LossAndGrad generator_loss(const LatentBatch& z, const ImageBatch& x_target, const Model& generator, double tau);

struct Rates {
  double hat = 0.0;
  double gen = 0.0;
};

Rates anneal_schedule(std::size_t step, const TrainConfig& cfg);

// Gradient of z-prior plus reconstruction term used by the latent
// inference chain: z + (1 / tau^2) J^T (G(z) - x).
Tensor latent_inference_drift(const LatentBatch& z, const ImageBatch& x, const Model& generator, double tau);

// Latent chain of the cooperative-learning baseline.
LatentBatch latent_inference_langevin(const ImageBatch& x, const LatentBatch& z0, const Model& generator, double tau,
                                      const LangevinConfig& cfg);

// One loop body of the tandem algorithm. Throws NumericError (with the
// state untouched) on a non-finite loss.
MetricRow tandem_train_step(TrainState& state, const ImageBatch& x_pos, const TrainConfig& cfg);

// Negatives for refine/retrofit: joint alternating chain from y = 0,
// z ~ N(0, I), or the generator-only ablation chain.
ImageBatch joint_negatives(const Model& hat, const Model& generator, const TrainConfig& cfg, std::size_t batch,
                           Rng& rng);

// Negatives of the tandem algorithm: z ~ N(0, I) and a residual chain
// from y = 0 with z fixed.
struct ConditionalNegatives {
  ImageBatch x;
  LatentBatch z;
};
ConditionalNegatives conditional_negatives(const Model& hat, const Model& generator, const TrainConfig& cfg,
                                           std::size_t batch, Rng& rng);

// Model samples with the chain used in training for cfg.mode, drawn in
// chunks of cfg.batch_size. `steps` overrides the chain length.
ImageBatch draw_samples(const Model& hat, const Model& generator, const TrainConfig& cfg, std::size_t count, Rng& rng,
                        std::optional<std::size_t> steps = std::nullopt);

// One hat update against joint negatives with the generator frozen.
MetricRow joint_train_step(TrainState& state, const ImageBatch& x_pos, const TrainConfig& cfg);

// Called after every step; returning false stops training.
using StepHook = std::function<bool(const TrainState&, const MetricRow&)>;

// Runs steps until state.step == cfg.steps, perturbing each positive batch
// by epsilon_data first. The stream is positioned from the state.
void train_loop(TrainState& state, BatchStream& data, const TrainConfig& cfg, const StepHook& hook = {});

// Joint Hat EBM training on a frozen pretrained generator.
void refine_train(TrainState& state, BatchStream& data, const TrainConfig& cfg, const StepHook& hook = {});

// Same control flow as refine_train with an autoencoder generator.
void retrofit_train(TrainState& state, BatchStream& data, const TrainConfig& cfg, const StepHook& hook = {});

struct AutoencoderConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  OptimizerSpec optimizer{};
  std::uint64_t seed = 0;
};

struct AutoencoderResult {
  Model inference;
  Model generator;
  std::vector<double> epoch_loss;
  // Largest relative deviation of any training latent norm from sqrt(m).
  double max_latent_norm_error = 0.0;
};

// Mean squared reconstruction error of G(sphere_project(I(x))) and its
// gradients in both parameter sets.
struct ReconstructionLoss {
  double loss = 0.0;
  ParamSet inference_grad;
  ParamSet generator_grad;
  LatentBatch latents;
};
ReconstructionLoss reconstruction_loss(const ImageBatch& x, const Model& inference, const Model& generator);

AutoencoderResult autoencoder_pretrain(const Tensor& images, const ArchConfig& arch, const AutoencoderConfig& cfg,
                                       const std::function<void(std::size_t, double)>& on_epoch = {});

void write_metric_log(const std::filesystem::path& path, const std::vector<MetricRow>& log);
std::vector<MetricRow> read_metric_log(const std::filesystem::path& path);
std::string metric_log_header();
std::string format_metric_row(const MetricRow& row);

}  // namespace hatebm
