#include "hatebm/sampler.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hatebm/error.hpp"

namespace hatebm {

void LangevinConfig::validate() const {
  if (!(eps_image >= 0.0) || !std::isfinite(eps_image)) throw ConfigError("langevin: eps_image must be >= 0");
  if (!(eps_latent >= 0.0) || !std::isfinite(eps_latent)) throw ConfigError("langevin: eps_latent must be >= 0");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("langevin: temperature must be >= 0");
}

ChainNoise::ChainNoise(std::uint64_t seed, std::size_t batch) {
  streams_.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) streams_.emplace_back(mix_seed(seed, i));
}

void ChainNoise::fill(std::size_t element, std::span<double> out) { streams_.at(element).fill_normal(out); }

Tensor langevin_step(const Tensor& x, const Tensor& grad, double eps, double temperature, ChainNoise& noise) {
  require_same_shape(x, grad, "langevin_step");
  if (!grad.all_finite()) throw NumericError("langevin_step: non-finite gradient");
  if (noise.batch() != x.batch()) throw ShapeError("langevin_step: noise streams do not match batch");
  const double drift = 0.5 * eps * eps;
  const double amp = eps * temperature;
  Tensor out(x.shape());
  const std::size_t per = x.sample_size();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.batch());

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < n; ++b) {
    const std::size_t off = static_cast<std::size_t>(b) * per;
    const double* px = x.data() + off;
    const double* pg = grad.data() + off;
    double* po = out.data() + off;
    if (amp == 0.0) {
      for (std::size_t i = 0; i < per; ++i) po[i] = px[i] - drift * pg[i];
    } else {
      std::vector<double> v(per);
      noise.fill(static_cast<std::size_t>(b), v);
      for (std::size_t i = 0; i < per; ++i) po[i] = px[i] - drift * pg[i] + amp * v[i];
    }
  }
  return out;
}

namespace {

double mean_norm(const Tensor& g) {
  const std::vector<double> sq = per_sample_squared_norm(g);
  double s = 0.0;
  for (double v : sq) s += std::sqrt(v);
  return sq.empty() ? 0.0 : s / static_cast<double>(sq.size());
}

std::vector<double> displacement(const Tensor& a, const Tensor& b) {
  std::vector<double> d = per_sample_squared_norm(a - b);
  for (double& v : d) v = std::sqrt(v);
  return d;
}

void check_step(const EnergyAndGrad& r, std::size_t step, const char* var) {
  if (!r.grad.all_finite()) {
    std::ostringstream os;
    os << "langevin: non-finite " << var << "-gradient at step " << step << " (mean energy " << mean(r.energy)
       << ")";
    throw NumericError(os.str());
  }
}

bool prior_on(const EnergyDef& def, PriorPlacement where) {
  return def.kind == EnergyKind::joint_with_prior && def.prior_sigma && def.prior_on == where;
}

// Energy at gz + y and its y-gradient, including a prior on y or z.
EnergyAndGrad residual_grad(const EnergyDef& def, const ImageBatch& gz, const ImageBatch& y, const LatentBatch& z) {
  require_same_shape(gz, y, "residual vs generator output");
  EnergyAndGrad r = hat_energy_and_grad(gz + y, *def.hat);
  if (prior_on(def, PriorPlacement::y)) {
    const std::vector<double> p = gaussian_prior_energy(y, *def.prior_sigma);
    for (std::size_t i = 0; i < p.size(); ++i) r.energy[i] += p[i];
    axpy(1.0 / (*def.prior_sigma * *def.prior_sigma), y, r.grad);
  } else if (prior_on(def, PriorPlacement::z)) {
    const std::vector<double> p = gaussian_prior_energy(z, *def.prior_sigma);
    for (std::size_t i = 0; i < p.size(); ++i) r.energy[i] += p[i];
  }
  return r;
}

double final_energy(const EnergyDef& def, const ImageBatch& gz, const ImageBatch& y, const LatentBatch& z) {
  std::vector<double> e = hat_energy(gz + y, *def.hat);
  if (prior_on(def, PriorPlacement::y) || prior_on(def, PriorPlacement::z)) {
    const std::vector<double> p = gaussian_prior_energy(prior_on(def, PriorPlacement::y) ? y : z, *def.prior_sigma);
    for (std::size_t i = 0; i < p.size(); ++i) e[i] += p[i];
  }
  return mean(e);
}

}  // namespace

JointSample alternating_langevin(const ImageBatch& y0, const LatentBatch& z0, const EnergyDef& def,
                                 const LangevinConfig& cfg) {
  def.validate();
  cfg.validate();
  if (def.kind != EnergyKind::joint && def.kind != EnergyKind::joint_with_prior) {
    throw ContractError(std::string("alternating_langevin needs a joint energy, got ") + to_string(def.kind));
  }
  if (y0.batch() != z0.batch()) throw ShapeError("alternating_langevin: y0 and z0 batch sizes differ");
  const Model& gen = *def.generator;
  ChainNoise y_noise(mix_seed(cfg.seed, 0), y0.batch());
  ChainNoise z_noise(mix_seed(cfg.seed, 1), z0.batch());
  const bool move_z = cfg.eps_latent > 0.0;

  JointSample s{y0, z0, {}};
  s.diagnostics.energy.reserve(cfg.steps + 1);
  ImageBatch gz;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    Tape gtape;
    gz = gen.net->forward(gen.params, s.z, gtape);

    EnergyAndGrad ry = residual_grad(def, gz, s.y, s.z);
    check_step(ry, k, "y");
    s.diagnostics.energy.push_back(mean(ry.energy));
    s.diagnostics.grad_norm_y.push_back(mean_norm(ry.grad));
    s.y = langevin_step(s.y, ry.grad, cfg.eps_image, cfg.temperature, y_noise);

    if (!move_z) {
      s.diagnostics.grad_norm_z.push_back(0.0);
      continue;
    }
    // Latent update sees the freshly updated residual.
    EnergyAndGrad h = hat_energy_and_grad(gz + s.y, *def.hat);
    Tensor gzgrad = gen.net->backward(gen.params, gtape, h.grad, nullptr);
    if (prior_on(def, PriorPlacement::z)) axpy(1.0 / (*def.prior_sigma * *def.prior_sigma), s.z, gzgrad);
    EnergyAndGrad rz{std::move(h.energy), std::move(gzgrad)};
    check_step(rz, k, "z");
    s.diagnostics.grad_norm_z.push_back(mean_norm(rz.grad));
    s.z = langevin_step(s.z, rz.grad, cfg.eps_latent, cfg.temperature, z_noise);
  }
  gz = gen(s.z);
  s.diagnostics.energy.push_back(final_energy(def, gz, s.y, s.z));
  s.diagnostics.displacement_y = displacement(s.y, y0);
  s.diagnostics.displacement_z = displacement(s.z, z0);
  return s;
}

ResidualSample conditional_langevin(const LatentBatch& z, const EnergyDef& def, const LangevinConfig& cfg) {
  def.validate();
  cfg.validate();
  if (def.kind != EnergyKind::conditional && def.kind != EnergyKind::joint &&
      def.kind != EnergyKind::joint_with_prior) {
    throw ContractError(std::string("conditional_langevin needs a residual energy, got ") + to_string(def.kind));
  }
  const ImageBatch gz = (*def.generator)(z);
  ChainNoise y_noise(mix_seed(cfg.seed, 0), z.batch());
  ResidualSample s{ImageBatch(gz.shape(), 0.0), {}};
  s.diagnostics.energy.reserve(cfg.steps + 1);
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    EnergyAndGrad r = residual_grad(def, gz, s.y, z);
    check_step(r, k, "y");
    s.diagnostics.energy.push_back(mean(r.energy));
    s.diagnostics.grad_norm_y.push_back(mean_norm(r.grad));
    s.y = langevin_step(s.y, r.grad, cfg.eps_image, cfg.temperature, y_noise);
  }
  s.diagnostics.energy.push_back(final_energy(def, gz, s.y, z));
  s.diagnostics.displacement_y = per_sample_squared_norm(s.y);
  for (double& v : s.diagnostics.displacement_y) v = std::sqrt(v);
  s.diagnostics.displacement_z.assign(z.batch(), 0.0);
  return s;
}

LatentSample latent_langevin(const LatentBatch& z0, const EnergyDef& def, const LangevinConfig& cfg) {
  def.validate();
  cfg.validate();
  if (def.kind != EnergyKind::no_residual_ablation && def.kind != EnergyKind::ddls) {
    throw ContractError(std::string("latent_langevin needs a latent-only energy, got ") + to_string(def.kind));
  }
  ChainNoise z_noise(mix_seed(cfg.seed, 1), z0.batch());
  LatentSample s{z0, {}};
  EnergyPoint p;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    p.z = s.z;
    EnergyAndGrad r = energy_and_grad(def, Variable::z, p);
    check_step(r, k, "z");
    s.diagnostics.energy.push_back(mean(r.energy));
    s.diagnostics.grad_norm_z.push_back(mean_norm(r.grad));
    s.z = langevin_step(s.z, r.grad, cfg.eps_latent, cfg.temperature, z_noise);
  }
  p.z = s.z;
  s.diagnostics.energy.push_back(mean(evaluate_energy(def, p)));
  s.diagnostics.displacement_y.assign(z0.batch(), 0.0);
  s.diagnostics.displacement_z = displacement(s.z, z0);
  return s;
}

NegativeInit init_negative_states(std::size_t batch_size, const Shape& latent_shape, const Shape& image_shape,
                                  Rng& rng) {
  Shape ys{batch_size};
  ys.insert(ys.end(), image_shape.begin(), image_shape.end());
  Shape zs{batch_size};
  zs.insert(zs.end(), latent_shape.begin(), latent_shape.end());
  NegativeInit init{ImageBatch(ys, 0.0), LatentBatch(zs)};
  rng.fill_normal(init.z0.values());
  return init;
}

void write_chain_trace(const std::filesystem::path& path, const ChainDiagnostics& diag) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write chain trace " + path.string());
  out << "step,mean_energy,grad_norm\n";
  out.precision(17);
  for (std::size_t k = 0; k < diag.energy.size(); ++k) {
    double g = 0.0;
    if (k < diag.grad_norm_y.size()) g = diag.grad_norm_y[k];
    if (k < diag.grad_norm_z.size() && diag.grad_norm_y.empty()) g = diag.grad_norm_z[k];
    out << k << ',' << diag.energy[k] << ',';
    if (k < std::max(diag.grad_norm_y.size(), diag.grad_norm_z.size())) {
      out << g;
    }
    out << '\n';
  }
}

}  // namespace hatebm
