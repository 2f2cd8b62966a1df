#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hatebm/energy.hpp"
#include "hatebm/rng.hpp"
#include "hatebm/tensor.hpp"

namespace hatebm {

// Step sizes, chain length, and noise scale of the unadjusted Langevin
// kernels. Noise enters as eps * temperature * V, so temperature 0 turns
// every chain into plain gradient descent.
struct LangevinConfig {
  double eps_image = 5e-4;  // residual / image-space step
  double eps_latent = 0.0;  // latent-space step
  std::size_t steps = 50;
  double temperature = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ChainDiagnostics {
  std::vector<double> energy;       // mean energy at each visited state, length steps + 1
  std::vector<double> grad_norm_y;  // mean per-sample gradient norm per step (image/residual variable)
  std::vector<double> grad_norm_z;  // same for the latent variable
  std::vector<double> displacement_y;  // per sample |y_K - y_0|
  std::vector<double> displacement_z;  // per sample |z_K - z_0|
};

// Independent Gaussian noise stream per batch element, keyed by
// (seed, element), so sharding a batch across threads never changes a chain.
class ChainNoise {
 public:
  ChainNoise(std::uint64_t seed, std::size_t batch);
  void fill(std::size_t element, std::span<double> out);
  std::size_t batch() const { return streams_.size(); }

 private:
  std::vector<Rng> streams_;
};

// x - (eps^2 / 2) grad + eps * temperature * V
Tensor langevin_step(const Tensor& x, const Tensor& grad, double eps, double temperature, ChainNoise& noise);

struct JointSample {
  ImageBatch y;
  LatentBatch z;
  ChainDiagnostics diagnostics;
};

struct ResidualSample {
  ImageBatch y;
  ChainDiagnostics diagnostics;
};

struct LatentSample {
  LatentBatch z;
  ChainDiagnostics diagnostics;
};

// Alternates a residual update at (y_k, z_k) with a latent update at
// (y_{k+1}, z_k) for cfg.steps rounds. Energy kind joint or joint_with_prior.
JointSample alternating_langevin(const ImageBatch& y0, const LatentBatch& z0, const EnergyDef& energy,
                                 const LangevinConfig& cfg);

// Residual-only chain from y = 0 with z held fixed.
ResidualSample conditional_langevin(const LatentBatch& z, const EnergyDef& energy, const LangevinConfig& cfg);

// Latent-only chain (no residual) for the no_residual_ablation and ddls
// energies; uses cfg.eps_latent.
LatentSample latent_langevin(const LatentBatch& z0, const EnergyDef& energy, const LangevinConfig& cfg);

struct NegativeInit {
  ImageBatch y0;
  LatentBatch z0;
};

NegativeInit init_negative_states(std::size_t batch_size, const Shape& latent_shape, const Shape& image_shape,
                                  Rng& rng);

void write_chain_trace(const std::filesystem::path& path, const ChainDiagnostics& diag);

}  // namespace hatebm
