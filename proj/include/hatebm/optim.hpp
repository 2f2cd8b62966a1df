#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "hatebm/layers.hpp"

namespace hatebm {

enum class OptimizerType { adam, sgd };

const char* to_string(OptimizerType t);
OptimizerType optimizer_type_from_string(const std::string& s);

struct OptimizerSpec {
  OptimizerType type = OptimizerType::adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::optional<double> clip;  // global gradient-norm threshold

  void validate() const;
};

// Adaptive-moment optimizer (or plain SGD) over one ParamSet. The moment
// estimates are ParamSets themselves so they checkpoint like weights.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const ParamSet& like, OptimizerSpec spec);

  // Applies one update at learning rate `lr` and returns the gradient norm
  // before clipping. A zero learning rate leaves `params` bitwise unchanged.
  double step(ParamSet& params, ParamSet grads, double lr);

  const OptimizerSpec& spec() const { return spec_; }
  std::uint64_t iterations() const { return t_; }

  ParamSet& first_moment() { return m_; }
  ParamSet& second_moment() { return v_; }
  const ParamSet& first_moment() const { return m_; }
  const ParamSet& second_moment() const { return v_; }
  void set_iterations(std::uint64_t t) { t_ = t; }

 private:
  OptimizerSpec spec_;
  ParamSet m_;
  ParamSet v_;
  std::uint64_t t_ = 0;
};

double global_norm(const ParamSet& grads);

}  // namespace hatebm
