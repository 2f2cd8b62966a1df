#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hatebm/nets.hpp"
#include "hatebm/tensor.hpp"

namespace hatebm {

enum class EnergyKind { plain, joint, joint_with_prior, conditional, no_residual_ablation, ddls };
enum class Variable { x, y, z };
enum class PriorPlacement { y, z };

const char* to_string(EnergyKind k);
EnergyKind energy_kind_from_string(const std::string& s);
const char* to_string(PriorPlacement p);
PriorPlacement prior_placement_from_string(const std::string& s);

// Which energy to evaluate and the networks it is built from. The
// referenced models must outlive the definition. Normalizing constants are
// never formed; everything downstream uses energy differences and
// gradients only.
//
//   plain                 H(x)
//   joint                 H(G(z) + y)
//   joint_with_prior      H(G(z) + y) + |v|^2 / (2 sigma^2), v = y or z
//   conditional           H(G(z) + y), z held fixed (y-gradients only)
//   no_residual_ablation  H(G(z))
//   ddls                  D(G(z)) + |z|^2 / 2
struct EnergyDef {
  EnergyKind kind = EnergyKind::plain;
  const Model* hat = nullptr;
  const Model* generator = nullptr;
  const Model* discriminator = nullptr;
  std::optional<double> prior_sigma;
  PriorPlacement prior_on = PriorPlacement::y;

  void validate() const;
  bool has_variable(Variable v) const;
};

// State the energy is evaluated at; only the fields in the kind's
// signature are read.
struct EnergyPoint {
  Tensor x;
  Tensor y;
  Tensor z;
};

struct EnergyAndGrad {
  std::vector<double> energy;  // per sample
  Tensor grad;                 // gradient of the summed energy
};

// Per-sample hat output; throws NumericError on non-finite values.
std::vector<double> hat_energy(const ImageBatch& x, const Model& hat);
EnergyAndGrad hat_energy_and_grad(const ImageBatch& x, const Model& hat);

std::vector<double> joint_energy(const ImageBatch& y, const LatentBatch& z, const Model& hat, const Model& generator);
std::vector<double> joint_energy_with_prior(const ImageBatch& y, const LatentBatch& z, const Model& hat,
                                            const Model& generator, double sigma);
std::vector<double> ablation_energy_no_residual(const LatentBatch& z, const Model& hat, const Model& generator);
std::vector<double> ddls_energy(const LatentBatch& z, const Model& discriminator, const Model& generator);

std::vector<double> evaluate_energy(const EnergyDef& def, const EnergyPoint& point);
Tensor energy_grad(const EnergyDef& def, Variable wrt, const EnergyPoint& point);
EnergyAndGrad energy_and_grad(const EnergyDef& def, Variable wrt, const EnergyPoint& point);

// Prior term |v|^2 / (2 sigma^2) per sample.
std::vector<double> gaussian_prior_energy(const Tensor& v, double sigma);

}  // namespace hatebm
