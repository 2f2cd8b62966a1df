#include "hatebm/optim.hpp"

#include <cmath>

#include "hatebm/error.hpp"

namespace hatebm {

const char* to_string(OptimizerType t) { return t == OptimizerType::adam ? "adam" : "sgd"; }

OptimizerType optimizer_type_from_string(const std::string& s) {
  if (s == "adam") return OptimizerType::adam;
  if (s == "sgd") return OptimizerType::sgd;
  throw ConfigError("unknown optimizer '" + s + "'");
}

void OptimizerSpec::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("optimizer: learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer: betas in [0, 1)");
  if (clip && !(*clip > 0.0)) throw ConfigError("optimizer: gradient clip must be > 0");
}

double global_norm(const ParamSet& grads) { return std::sqrt(grads.squared_norm()); }

Optimizer::Optimizer(const ParamSet& like, OptimizerSpec spec)
    : spec_(spec), m_(like.zeros_like()), v_(like.zeros_like()) {
  spec_.validate();
}

double Optimizer::step(ParamSet& params, ParamSet grads, double lr) {
  if (params.tensors.size() != grads.tensors.size() || m_.tensors.size() != grads.tensors.size()) {
    throw ShapeError("optimizer: gradient set does not match parameters");
  }
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw NumericError("optimizer: non-finite gradient norm");
  if (spec_.clip && norm > *spec_.clip) {
    const double scale = *spec_.clip / norm;
    for (Tensor& g : grads.tensors) {
      for (double& v : g.values()) v *= scale;
    }
  }
  ++t_;
  const bool apply = lr != 0.0;
  if (spec_.type == OptimizerType::sgd) {
    if (apply) {
      for (std::size_t i = 0; i < params.tensors.size(); ++i) axpy(-lr, grads.tensors[i], params.tensors[i]);
    }
    return norm;
  }
  const double b1 = spec_.beta1, b2 = spec_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    double* p = params.tensors[i].data();
    double* m = m_.tensors[i].data();
    double* v = v_.tensors[i].data();
    const double* g = grads.tensors[i].data();
    const std::size_t n = params.tensors[i].size();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      if (apply) p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + spec_.epsilon);
    }
  }
  return norm;
}

}  // namespace hatebm
