#include "hatebm/energy.hpp"

#include <cmath>
#include <sstream>

#include "hatebm/error.hpp"

namespace hatebm {

const char* to_string(EnergyKind k) {
  switch (k) {
    case EnergyKind::plain:
      return "plain";
    case EnergyKind::joint:
      return "joint";
    case EnergyKind::joint_with_prior:
      return "joint_with_prior";
    case EnergyKind::conditional:
      return "conditional";
    case EnergyKind::no_residual_ablation:
      return "no_residual_ablation";
    case EnergyKind::ddls:
      return "ddls";
  }
  return "?";
}

EnergyKind energy_kind_from_string(const std::string& s) {
  for (EnergyKind k : {EnergyKind::plain, EnergyKind::joint, EnergyKind::joint_with_prior, EnergyKind::conditional,
                       EnergyKind::no_residual_ablation, EnergyKind::ddls}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown energy kind '" + s + "'");
}

const char* to_string(PriorPlacement p) { return p == PriorPlacement::y ? "y" : "z"; }

PriorPlacement prior_placement_from_string(const std::string& s) {
  if (s == "y") return PriorPlacement::y;
  if (s == "z") return PriorPlacement::z;
  throw ConfigError("prior placement must be 'y' or 'z', got '" + s + "'");
}

void EnergyDef::validate() const {
  if (!hat && kind != EnergyKind::ddls) throw ConfigError(std::string(to_string(kind)) + " energy needs a hat network");
  if (kind != EnergyKind::plain && !generator) {
    throw ConfigError(std::string(to_string(kind)) + " energy needs a generator");
  }
  if (kind == EnergyKind::ddls && !discriminator) throw ConfigError("ddls energy needs a discriminator");
  if (kind == EnergyKind::joint_with_prior && !prior_sigma) throw ConfigError("joint_with_prior needs prior sigma");
  if (prior_sigma && !(*prior_sigma > 0.0)) throw ConfigError("prior sigma must be > 0");
}

bool EnergyDef::has_variable(Variable v) const {
  switch (kind) {
    case EnergyKind::plain:
      return v == Variable::x;
    case EnergyKind::joint:
    case EnergyKind::joint_with_prior:
    case EnergyKind::conditional:
      return v == Variable::y || v == Variable::z;
    case EnergyKind::no_residual_ablation:
    case EnergyKind::ddls:
      return v == Variable::z;
  }
  return false;
}

namespace {

std::vector<double> column(const Tensor& out) {
  std::vector<double> e(out.values().begin(), out.values().end());
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (!std::isfinite(e[i])) {
      std::ostringstream os;
      os << "non-finite energy " << e[i] << " at sample " << i << " of " << e.size();
      throw NumericError(os.str());
    }
  }
  return e;
}

ImageBatch compose(const ImageBatch& gz, const ImageBatch& y) {
  if (gz.shape() != y.shape()) {
    throw ShapeError("residual shape " + shape_string(y.shape()) + " does not match generator output " +
                     shape_string(gz.shape()));
  }
  return gz + y;
}

// Energy of the scalar head at G(z) + y (y may be empty) and its gradient
// with respect to z, backpropagated through the generator.
EnergyAndGrad head_energy_and_z_grad(const Model& head, const Model& generator, const LatentBatch& z,
                                     const ImageBatch* y) {
  Tape gtape;
  ImageBatch x = generator.net->forward(generator.params, z, gtape);
  if (y) x = compose(x, *y);
  EnergyAndGrad h = hat_energy_and_grad(x, head);
  Tensor gz = generator.net->backward(generator.params, gtape, h.grad, nullptr);
  return EnergyAndGrad{std::move(h.energy), std::move(gz)};
}

void add_prior(std::vector<double>& energy, Tensor* grad, const Tensor& v, double sigma) {
  const std::vector<double> p = gaussian_prior_energy(v, sigma);
  for (std::size_t i = 0; i < energy.size(); ++i) energy[i] += p[i];
  if (grad) axpy(1.0 / (sigma * sigma), v, *grad);
}

}  // namespace

std::vector<double> gaussian_prior_energy(const Tensor& v, double sigma) {
  if (!(sigma > 0.0)) throw ContractError("prior sigma must be > 0");
  std::vector<double> e = per_sample_squared_norm(v);
  for (double& x : e) x /= 2.0 * sigma * sigma;
  return e;
}

std::vector<double> hat_energy(const ImageBatch& x, const Model& hat) { return column(hat(x)); }

EnergyAndGrad hat_energy_and_grad(const ImageBatch& x, const Model& hat) {
  Tape tape;
  Tensor out = hat.net->forward(hat.params, x, tape);
  std::vector<double> e = column(out);
  Tensor ones(out.shape(), 1.0);
  Tensor g = hat.net->backward(hat.params, tape, ones, nullptr);
  return EnergyAndGrad{std::move(e), std::move(g)};
}

std::vector<double> joint_energy(const ImageBatch& y, const LatentBatch& z, const Model& hat, const Model& generator) {
  return hat_energy(compose(generator(z), y), hat);
}

std::vector<double> joint_energy_with_prior(const ImageBatch& y, const LatentBatch& z, const Model& hat,
                                            const Model& generator, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("prior sigma must be > 0");
  std::vector<double> e = joint_energy(y, z, hat, generator);
  add_prior(e, nullptr, y, sigma);
  return e;
}

std::vector<double> ablation_energy_no_residual(const LatentBatch& z, const Model& hat, const Model& generator) {
  return hat_energy(generator(z), hat);
}

std::vector<double> ddls_energy(const LatentBatch& z, const Model& discriminator, const Model& generator) {
  std::vector<double> e = hat_energy(generator(z), discriminator);
  const std::vector<double> sq = per_sample_squared_norm(z);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] += 0.5 * sq[i];
  return e;
}

std::vector<double> evaluate_energy(const EnergyDef& def, const EnergyPoint& p) {
  def.validate();
  switch (def.kind) {
    case EnergyKind::plain:
      return hat_energy(p.x, *def.hat);
    case EnergyKind::joint:
    case EnergyKind::conditional:
    case EnergyKind::joint_with_prior: {
      std::vector<double> e = joint_energy(p.y, p.z, *def.hat, *def.generator);
      if (def.prior_sigma && (def.kind == EnergyKind::joint_with_prior)) {
        add_prior(e, nullptr, def.prior_on == PriorPlacement::y ? p.y : p.z, *def.prior_sigma);
      }
      return e;
    }
    case EnergyKind::no_residual_ablation:
      return ablation_energy_no_residual(p.z, *def.hat, *def.generator);
    case EnergyKind::ddls:
      return ddls_energy(p.z, *def.discriminator, *def.generator);
  }
  return {};
}

EnergyAndGrad energy_and_grad(const EnergyDef& def, Variable wrt, const EnergyPoint& p) {
  def.validate();
  if (!def.has_variable(wrt)) {
    throw ContractError(std::string("energy ") + to_string(def.kind) + " has no such variable");
  }
  if (def.kind == EnergyKind::conditional && wrt == Variable::z) {
    throw ContractError("conditional energy keeps z fixed; z-gradient requested");
  }
  const bool with_prior = def.kind == EnergyKind::joint_with_prior;
  switch (def.kind) {
    case EnergyKind::plain:
      return hat_energy_and_grad(p.x, *def.hat);
    case EnergyKind::joint:
    case EnergyKind::joint_with_prior:
    case EnergyKind::conditional: {
      EnergyAndGrad r;
      if (wrt == Variable::y) {
        r = hat_energy_and_grad(compose((*def.generator)(p.z), p.y), *def.hat);
      } else {
        r = head_energy_and_z_grad(*def.hat, *def.generator, p.z, &p.y);
      }
      if (with_prior) {
        const bool on_y = def.prior_on == PriorPlacement::y;
        const Tensor& v = on_y ? p.y : p.z;
        const bool grad_applies = (wrt == Variable::y) == on_y;
        add_prior(r.energy, grad_applies ? &r.grad : nullptr, v, *def.prior_sigma);
      }
      return r;
    }
    case EnergyKind::no_residual_ablation:
      return head_energy_and_z_grad(*def.hat, *def.generator, p.z, nullptr);
    case EnergyKind::ddls: {
      EnergyAndGrad r = head_energy_and_z_grad(*def.discriminator, *def.generator, p.z, nullptr);
      const std::vector<double> sq = per_sample_squared_norm(p.z);
      for (std::size_t i = 0; i < r.energy.size(); ++i) r.energy[i] += 0.5 * sq[i];
      axpy(1.0, p.z, r.grad);
      return r;
    }
  }
  return {};
}

Tensor energy_grad(const EnergyDef& def, Variable wrt, const EnergyPoint& point) {
  return energy_and_grad(def, wrt, point).grad;
}

}  // namespace hatebm
