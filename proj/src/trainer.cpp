#include "hatebm/trainer.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hatebm/error.hpp"

namespace hatebm {

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::synthesis:
      return "synthesis";
    case TrainMode::refine:
      return "refine";
    case TrainMode::retrofit:
      return "retrofit";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  for (TrainMode m : {TrainMode::synthesis, TrainMode::refine, TrainMode::retrofit}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown training mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (mode == TrainMode::synthesis && batch_size > bank_capacity) {
    throw ConfigError("train: batch size " + std::to_string(batch_size) + " exceeds bank capacity " +
                      std::to_string(bank_capacity));
  }
  hat_optimizer.validate();
  gen_optimizer.validate();
  langevin.validate();
  if (!(epsilon_data >= 0.0)) throw ConfigError("train: epsilon_data must be >= 0");
  if (!(tau > 0.0)) throw ConfigError("train: tau must be > 0");
  if (anneal.step && !(anneal.factor > 0.0)) throw ConfigError("train: anneal factor must be > 0");
  if (mode != TrainMode::synthesis && energy != EnergyKind::joint && energy != EnergyKind::joint_with_prior &&
      energy != EnergyKind::no_residual_ablation) {
    throw ConfigError(std::string("train: energy '") + to_string(energy) + "' cannot drive joint training");
  }
  if (energy == EnergyKind::joint_with_prior && !prior_sigma) throw ConfigError("train: prior energy needs sigma");
  if (prior_sigma && !(*prior_sigma > 0.0)) throw ConfigError("train: prior sigma must be > 0");
  if (inference_steps > 0 && !(inference_eps > 0.0)) throw ConfigError("train: inference eps must be > 0");
}

TrainState make_train_state(Model hat, Model generator, const TrainConfig& cfg, Rng rng) {
  cfg.validate();
  TrainState s;
  s.hat_opt = Optimizer(hat.params, cfg.hat_optimizer);
  s.gen_opt = Optimizer(generator.params, cfg.gen_optimizer);
  s.hat = std::move(hat);
  s.generator = std::move(generator);
  s.rng = std::move(rng);
  if (cfg.mode == TrainMode::synthesis) s.bank = bank_init(cfg.bank_capacity, s.generator, s.rng);
  return s;
}

LossAndGrad ebm_loss(const ImageBatch& x_pos, const ImageBatch& x_neg, const Model& hat) {
  if (x_pos.batch() != x_neg.batch() || x_pos.shape() != x_neg.shape()) {
    throw ShapeError("ebm_loss: positive " + shape_string(x_pos.shape()) + " vs negative " +
                     shape_string(x_neg.shape()));
  }
  if (x_pos.batch() == 0) throw ShapeError("ebm_loss: empty batch");
  const double n = static_cast<double>(x_pos.batch());
  LossAndGrad r;
  r.grad = hat.params.zeros_like();

  Tape tp;
  const Tensor ep = hat.net->forward(hat.params, x_pos, tp);
  hat.net->backward(hat.params, tp, Tensor(ep.shape(), 1.0 / n), &r.grad);
  Tape tn;
  const Tensor en = hat.net->forward(hat.params, x_neg, tn);
  hat.net->backward(hat.params, tn, Tensor(en.shape(), -1.0 / n), &r.grad);

  r.pos_mean = mean(ep.values());
  r.neg_mean = mean(en.values());
  r.loss = r.pos_mean - r.neg_mean;
  return r;
}

LossAndGrad generator_loss(const LatentBatch& z, const ImageBatch& x_target, const Model& generator, double tau) {
  if (!(tau > 0.0)) throw ContractError("generator_loss: tau must be > 0");
  if (z.batch() != x_target.batch()) throw ShapeError("generator_loss: latent and target counts differ");
  if (z.batch() == 0) throw ShapeError("generator_loss: empty batch");
  const double n = static_cast<double>(z.batch());
  Tape tape;
  const ImageBatch g = generator.net->forward(generator.params, z, tape);
  require_same_shape(g, x_target, "generator_loss: output vs target");
  const Tensor diff = g - x_target;
  LossAndGrad r;
  r.loss = squared_norm(diff) / (2.0 * tau * tau * n);
  r.grad = generator.params.zeros_like();
  generator.net->backward(generator.params, tape, (1.0 / (tau * tau * n)) * diff, &r.grad);
  return r;
}

Rates anneal_schedule(std::size_t step, const TrainConfig& cfg) {
  Rates r{cfg.hat_optimizer.lr, cfg.gen_optimizer.lr};
  if (cfg.anneal.step && step >= *cfg.anneal.step) {
    r.hat /= cfg.anneal.factor;
    r.gen /= cfg.anneal.factor;
  }
  return r;
}

Tensor latent_inference_drift(const LatentBatch& z, const ImageBatch& x, const Model& generator, double tau) {
  if (!(tau > 0.0)) throw ContractError("latent inference: tau must be > 0");
  Tape tape;
  const ImageBatch g = generator.net->forward(generator.params, z, tape);
  require_same_shape(g, x, "latent inference: generator output vs target");
  Tensor drift = generator.net->backward(generator.params, tape, (1.0 / (tau * tau)) * (g - x), nullptr);
  drift += z;
  return drift;
}

LatentBatch latent_inference_langevin(const ImageBatch& x, const LatentBatch& z0, const Model& generator, double tau,
                                      const LangevinConfig& cfg) {
  cfg.validate();
  if (x.batch() != z0.batch()) throw ShapeError("latent inference: image and latent counts differ");
  ChainNoise noise(mix_seed(cfg.seed, 1), z0.batch());
  LatentBatch z = z0;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const Tensor d = latent_inference_drift(z, x, generator, tau);
    if (!d.all_finite()) throw NumericError("latent inference: non-finite drift at step " + std::to_string(k));
    z = langevin_step(z, d, cfg.eps_latent, cfg.temperature, noise);
  }
  return z;
}

namespace {

Shape with_batch(std::size_t n, const Shape& sample) {
  Shape s{n};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

void require_finite(double v, const char* what, std::size_t step) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string(what) + " is non-finite at step " + std::to_string(step));
  }
}

}  // namespace

MetricRow tandem_train_step(TrainState& state, const ImageBatch& x_pos, const TrainConfig& cfg) {
  cfg.validate();
  if (state.bank.capacity() == 0) throw ContractError("tandem step needs an initialized bank");
  const std::size_t b = x_pos.batch();
  if (b > state.bank.capacity()) throw ContractError("tandem step: batch exceeds bank capacity");
  const Rates rates = anneal_schedule(state.step, cfg);
  // Work on a copy of the stream so a failed step leaves the state untouched.
  Rng rng = state.rng;
  const ConditionalNegatives neg = conditional_negatives(state.hat, state.generator, cfg, b, rng);
  const ImageBatch& x_neg = neg.x;
  const LatentBatch& z_new = neg.z;

  const LossAndGrad hat_loss = ebm_loss(x_pos, x_neg, state.hat);
  require_finite(hat_loss.loss, "ebm loss", state.step);

  SampleBank::Drawn drawn = state.bank.draw(b, rng);
  LatentBatch z_fit = drawn.z;
  if (cfg.inference_steps > 0) {
    LangevinConfig ic;
    ic.eps_image = 0.0;
    ic.eps_latent = cfg.inference_eps;
    ic.steps = cfg.inference_steps;
    ic.temperature = cfg.langevin.temperature;
    ic.seed = rng.next_u64();
    z_fit = latent_inference_langevin(drawn.x, drawn.z, state.generator, cfg.tau, ic);
  }
  const LossAndGrad gen_loss = generator_loss(z_fit, drawn.x, state.generator, cfg.tau);
  require_finite(gen_loss.loss, "generator loss", state.step);
  require_finite(global_norm(hat_loss.grad), "hat gradient", state.step);
  require_finite(global_norm(gen_loss.grad), "generator gradient", state.step);

  MetricRow row;
  row.step = state.step;
  row.ebm_loss = hat_loss.loss;
  row.gen_loss = gen_loss.loss;
  row.energy_gap = hat_loss.pos_mean - hat_loss.neg_mean;
  row.pos_energy = hat_loss.pos_mean;
  row.neg_energy = hat_loss.neg_mean;
  row.hat_grad_norm = state.hat_opt.step(state.hat.params, hat_loss.grad, rates.hat);
  row.gen_grad_norm = state.gen_opt.step(state.generator.params, gen_loss.grad, rates.gen);
  state.bank.overwrite(drawn.indices, x_neg, z_new);
  state.rng = std::move(rng);
  ++state.step;
  state.log.push_back(row);
  return row;
}

ConditionalNegatives conditional_negatives(const Model& hat, const Model& generator, const TrainConfig& cfg,
                                           std::size_t batch, Rng& rng) {
  LatentBatch z(with_batch(batch, generator.net->input_shape()));
  rng.fill_normal(z.values());
  LangevinConfig lc = cfg.langevin;
  lc.seed = rng.next_u64();
  EnergyDef def;
  def.kind = EnergyKind::conditional;
  def.hat = &hat;
  def.generator = &generator;
  const ResidualSample chain = conditional_langevin(z, def, lc);
  ImageBatch x = generator(z) + chain.y;
  return ConditionalNegatives{std::move(x), std::move(z)};
}

ImageBatch joint_negatives(const Model& hat, const Model& generator, const TrainConfig& cfg, std::size_t batch,
                           Rng& rng) {
  NegativeInit init = init_negative_states(batch, generator.net->input_shape(), hat.net->input_shape(), rng);
  LangevinConfig lc = cfg.langevin;
  lc.seed = rng.next_u64();
  EnergyDef def;
  def.hat = &hat;
  def.generator = &generator;
  if (cfg.energy == EnergyKind::no_residual_ablation) {
    def.kind = EnergyKind::no_residual_ablation;
    const LatentSample s = latent_langevin(init.z0, def, lc);
    return generator(s.z);
  }
  def.kind = cfg.energy;
  def.prior_sigma = cfg.energy == EnergyKind::joint_with_prior ? cfg.prior_sigma : std::nullopt;
  def.prior_on = cfg.prior_on;
  const JointSample s = alternating_langevin(init.y0, init.z0, def, lc);
  return generator(s.z) + s.y;
}

ImageBatch draw_samples(const Model& hat, const Model& generator, const TrainConfig& cfg, std::size_t count, Rng& rng,
                        std::optional<std::size_t> steps) {
  TrainConfig c = cfg;
  if (steps) c.langevin.steps = *steps;
  const Shape image = hat.net->input_shape();
  ImageBatch out(with_batch(count, image));
  const std::size_t chunk = std::max<std::size_t>(c.batch_size, 1);
  for (std::size_t start = 0; start < count; start += chunk) {
    const std::size_t n = std::min(chunk, count - start);
    const ImageBatch x = c.mode == TrainMode::synthesis ? conditional_negatives(hat, generator, c, n, rng).x
                                                        : joint_negatives(hat, generator, c, n, rng);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = start + i;
    out.scatter(idx, x);
  }
  return out;
}

MetricRow joint_train_step(TrainState& state, const ImageBatch& x_pos, const TrainConfig& cfg) {
  cfg.validate();
  const Rates rates = anneal_schedule(state.step, cfg);
  Rng rng = state.rng;
  const ImageBatch x_neg = joint_negatives(state.hat, state.generator, cfg, x_pos.batch(), rng);
  const LossAndGrad hat_loss = ebm_loss(x_pos, x_neg, state.hat);
  require_finite(hat_loss.loss, "ebm loss", state.step);
  require_finite(global_norm(hat_loss.grad), "hat gradient", state.step);

  MetricRow row;
  row.step = state.step;
  row.ebm_loss = hat_loss.loss;
  row.energy_gap = hat_loss.pos_mean - hat_loss.neg_mean;
  row.pos_energy = hat_loss.pos_mean;
  row.neg_energy = hat_loss.neg_mean;
  row.hat_grad_norm = state.hat_opt.step(state.hat.params, hat_loss.grad, rates.hat);
  state.rng = std::move(rng);
  ++state.step;
  state.log.push_back(row);
  return row;
}

void train_loop(TrainState& state, BatchStream& data, const TrainConfig& cfg, const StepHook& hook) {
  cfg.validate();
  data.seek(state.data_epoch, state.data_cursor);
  while (state.step < cfg.steps) {
    const ImageBatch x = data.next();
    const Rng saved = state.rng;
    const ImageBatch x_pos = cfg.epsilon_data > 0.0 ? perturb_data(x, cfg.epsilon_data, state.rng) : x;
    MetricRow row;
    try {
      row = cfg.mode == TrainMode::synthesis ? tandem_train_step(state, x_pos, cfg)
                                             : joint_train_step(state, x_pos, cfg);
    } catch (...) {
      state.rng = saved;
      throw;
    }
    state.data_epoch = data.epoch();
    state.data_cursor = data.cursor();
    if (hook && !hook(state, row)) break;
  }
}

void refine_train(TrainState& state, BatchStream& data, const TrainConfig& cfg, const StepHook& hook) {
  if (cfg.mode != TrainMode::refine) throw ConfigError("refine_train needs mode 'refine'");
  train_loop(state, data, cfg, hook);
}

void retrofit_train(TrainState& state, BatchStream& data, const TrainConfig& cfg, const StepHook& hook) {
  if (cfg.mode != TrainMode::retrofit) throw ConfigError("retrofit_train needs mode 'retrofit'");
  train_loop(state, data, cfg, hook);
}

ReconstructionLoss reconstruction_loss(const ImageBatch& x, const Model& inference, const Model& generator) {
  Tape ti;
  const LatentBatch raw = inference.net->forward(inference.params, x, ti);
  ReconstructionLoss r;
  r.latents = sphere_project(raw);
  Tape tg;
  const ImageBatch xhat = generator.net->forward(generator.params, r.latents, tg);
  require_same_shape(xhat, x, "reconstruction");
  const Tensor diff = xhat - x;
  const double n = static_cast<double>(x.size());
  r.loss = squared_norm(diff) / n;
  r.generator_grad = generator.params.zeros_like();
  r.inference_grad = inference.params.zeros_like();
  const Tensor gz = generator.net->backward(generator.params, tg, (2.0 / n) * diff, &r.generator_grad);
  inference.net->backward(inference.params, ti, sphere_project_backward(raw, gz), &r.inference_grad);
  return r;
}

AutoencoderResult autoencoder_pretrain(const Tensor& images, const ArchConfig& arch, const AutoencoderConfig& cfg,
                                       const std::function<void(std::size_t, double)>& on_epoch) {
  arch.validate();
  cfg.optimizer.validate();
  if (images.batch() == 0) throw ConfigError("autoencoder: empty dataset");
  if (cfg.batch_size == 0) throw ConfigError("autoencoder: batch size must be positive");
  Rng rng(cfg.seed);
  AutoencoderResult res;
  res.inference = build_inference_network(arch, rng);
  res.generator = build_generator(arch, rng);
  Optimizer oi(res.inference.params, cfg.optimizer);
  Optimizer og(res.generator.params, cfg.optimizer);
  BatchStream stream(std::make_shared<const Tensor>(images), cfg.batch_size, mix_seed(cfg.seed, 0xAE), false);
  const std::size_t per_epoch = (images.batch() + cfg.batch_size - 1) / cfg.batch_size;
  const double radius = std::sqrt(static_cast<double>(arch.latent_size()));

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const ImageBatch x = stream.next();
      ReconstructionLoss r = reconstruction_loss(x, res.inference, res.generator);
      if (!std::isfinite(r.loss)) throw NumericError("autoencoder: non-finite loss in epoch " + std::to_string(e));
      for (double sq : per_sample_squared_norm(r.latents)) {
        res.max_latent_norm_error = std::max(res.max_latent_norm_error, std::abs(std::sqrt(sq) - radius) / radius);
      }
      oi.step(res.inference.params, std::move(r.inference_grad), cfg.optimizer.lr);
      og.step(res.generator.params, std::move(r.generator_grad), cfg.optimizer.lr);
      total += r.loss * static_cast<double>(x.batch());
      count += x.batch();
    }
    res.epoch_loss.push_back(total / static_cast<double>(count));
    if (on_epoch) on_epoch(e, res.epoch_loss.back());
  }
  return res;
}

namespace {

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_num(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    if (s == "nan" || s == "-nan") return std::nan("");
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    throw IoError("metric log: bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::string metric_log_header() {
  return "step,ebm_loss,gen_loss,energy_gap,hat_grad_norm,gen_grad_norm,pos_energy,neg_energy";
}

std::string format_metric_row(const MetricRow& r) {
  return std::to_string(r.step) + ',' + num(r.ebm_loss) + ',' + num(r.gen_loss) + ',' + num(r.energy_gap) + ',' +
         num(r.hat_grad_norm) + ',' + num(r.gen_grad_norm) + ',' + num(r.pos_energy) + ',' + num(r.neg_energy);
}

void write_metric_log(const std::filesystem::path& path, const std::vector<MetricRow>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metric log " + path.string());
  out << metric_log_header() << '\n';
  for (const MetricRow& r : log) out << format_metric_row(r) << '\n';
}

std::vector<MetricRow> read_metric_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metric log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != metric_log_header()) {
    throw IoError("metric log " + path.string() + " has an unexpected header");
  }
  std::vector<MetricRow> log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw IoError("metric log: expected 8 columns, got " + std::to_string(f.size()));
    MetricRow r;
    r.step = static_cast<std::size_t>(std::stoull(f[0]));
    r.ebm_loss = parse_num(f[1]);
    r.gen_loss = parse_num(f[2]);
    r.energy_gap = parse_num(f[3]);
    r.hat_grad_norm = parse_num(f[4]);
    r.gen_grad_norm = parse_num(f[5]);
    r.pos_energy = parse_num(f[6]);
    r.neg_energy = parse_num(f[7]);
    log.push_back(r);
  }
  return log;
}

}  // namespace hatebm
