#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "hatebm/layers.hpp"
#include "hatebm/rng.hpp"
#include "hatebm/tensor.hpp"

namespace hatebm {

enum class Topology { conv, mlp };

const char* to_string(Topology t);
Topology topology_from_string(const std::string& s);

// Architecture shared by the hat, generator, and inference networks of one
// experiment. Conv topology stacks residual blocks in the style of the
// SN-GAN discriminator/generator at configurable width and depth; the mlp
// topology is for low-dimensional toy data stored as (1, 1, d) images.
struct ArchConfig {
  Shape image_shape{32, 32, 3};  // (h, w, c)
  Shape latent_shape{128};       // (m) or (h', w', c')
  Topology topology = Topology::conv;
  std::size_t hat_width = 32;
  std::size_t hat_depth = 3;
  Activation hat_activation = Activation::leaky_relu;
  std::size_t gen_width = 32;
  std::size_t gen_depth = 3;
  Activation gen_activation = Activation::relu;
  bool gen_norm = true;

  bool image_latent() const { return latent_shape.size() == 3; }
  std::size_t latent_size() const { return shape_size(latent_shape); }

  void validate() const;
  std::string canonical() const;
  std::uint64_t hash() const;
};

std::uint64_t fnv1a64(const std::string& text);

// Structure of one network. Immutable once built; forward/backward are safe
// to call concurrently with distinct tapes.
class Network {
 public:
  Network(NetKind kind, ArchConfig cfg, std::unique_ptr<Sequential> body, ParamLayout layout);

  NetKind kind() const { return kind_; }
  const ArchConfig& config() const { return cfg_; }
  const Shape& input_shape() const { return body_->input_shape(); }
  Shape output_shape() const { return body_->output_shape(); }
  std::uint64_t arch_hash() const { return arch_hash_; }
  std::size_t param_count() const;

  ParamSet init_params(Rng& rng) const;
  // Throws if `params` was not made for this architecture.
  void check_params(const ParamSet& params) const;

  Tensor forward(const ParamSet& params, const Tensor& x) const;
  Tensor forward(const ParamSet& params, const Tensor& x, Tape& tape) const;
  Tensor backward(const ParamSet& params, const Tape& tape, const Tensor& grad_out, ParamSet* grads) const;

 private:
  void check_input(const Tensor& x) const;

  NetKind kind_;
  ArchConfig cfg_;
  std::unique_ptr<Sequential> body_;
  ParamLayout layout_;
  std::uint64_t arch_hash_;
};

// Network structure paired with its parameters.
struct Model {
  std::shared_ptr<const Network> net;
  ParamSet params;

  Tensor operator()(const Tensor& x) const { return net->forward(params, x); }
};

std::shared_ptr<const Network> make_hat_network(const ArchConfig& cfg);
std::shared_ptr<const Network> make_generator(const ArchConfig& cfg);
std::shared_ptr<const Network> make_inference_network(const ArchConfig& cfg);

Model build_hat_network(const ArchConfig& cfg, Rng& rng);
Model build_generator(const ArchConfig& cfg, Rng& rng);
Model build_inference_network(const ArchConfig& cfg, Rng& rng);
Model build_network(NetKind kind, const ArchConfig& cfg, Rng& rng);

// Scales each latent (flattened) onto the sphere of radius sqrt(m).
LatentBatch sphere_project(const LatentBatch& v);
// Gradient of sphere_project at `v`, applied to `grad_out`.
LatentBatch sphere_project_backward(const LatentBatch& v, const LatentBatch& grad_out);

}  // namespace hatebm
