#include <utility>
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "hatebm/data.hpp"
#include "hatebm/energy.hpp"
#include "hatebm/error.hpp"
#include "hatebm/trainer.hpp"
#include "oracles.hpp"

using namespace hatebm;
using namespace hatebm::testing;

namespace {

TrainConfig small_cfg(std::size_t batch = 4) {
  TrainConfig c;
  c.batch_size = batch;
  c.steps = 5;
  c.bank_capacity = 12;
  c.langevin.steps = 3;
  c.langevin.eps_image = 0.1;
  c.langevin.eps_latent = 0.1;
  c.langevin.temperature = 1e-3;
  c.hat_optimizer.lr = 1e-3;
  c.gen_optimizer.lr = 1e-3;
  c.energy = EnergyKind::conditional;
  return c;
}

struct Models {
  ArchConfig arch = tiny_arch();
  Rng rng{11};
  Model hat = build_hat_network(arch, rng);
  Model gen = build_generator(arch, rng);
};

Model linear_hat(const ArchConfig& base, const std::vector<double>& w) {
  ArchConfig a = base;
  a.hat_depth = 0;
  Rng r(0);
  Model m = build_hat_network(a, r);
  Tensor& wt = param(m.params, "hat.out.w");
  for (std::size_t i = 0; i < w.size(); ++i) wt[i] = w[i];
  param(m.params, "hat.out.b").fill(0.0);
  return m;
}

Model zero_generator(const ArchConfig& a) {
  Rng r(0);
  Model g = build_generator(a, r);
  for (auto& t : g.params.tensors) t.fill(0.0);
  return g;
}

std::size_t changed_rows(const Tensor& a, const Tensor& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.batch(); ++i) {
    auto ra = a.sample(i), rb = b.sample(i);
    if (!std::equal(ra.begin(), ra.end(), rb.begin())) ++n;
  }
  return n;
}

}  // namespace

TEST(EbmLoss, EqualBatchesGiveZero) {
  Models m;
  Tensor x = random_tensor({5, 2, 2, 1}, 1);
  LossAndGrad l = ebm_loss(x, x, m.hat);
  EXPECT_EQ(l.loss, 0.0);
  EXPECT_LT(std::sqrt(l.grad.squared_norm()), 1e-14);
}

TEST(EbmLoss, LinearHatGradientIsMeanDifference) {
  ArchConfig a = tiny_arch();
  Model hat = linear_hat(a, {0.3, -0.2, 0.5, 0.1});
  Tensor pos = random_tensor({6, 2, 2, 1}, 1), neg = random_tensor({6, 2, 2, 1}, 2);
  LossAndGrad l = ebm_loss(pos, neg, hat);
  const Tensor& gw = param(l.grad, "hat.out.w");
  for (std::size_t k = 0; k < 4; ++k) {
    double mp = 0, mn = 0;
    for (std::size_t i = 0; i < 6; ++i) mp += pos.sample(i)[k] / 6;
    for (std::size_t i = 0; i < 6; ++i) mn += neg.sample(i)[k] / 6;
    EXPECT_NEAR(gw[k], mp - mn, 1e-15);
  }
  EXPECT_NEAR(param(l.grad, "hat.out.b")[0], 0.0, 1e-15);
}

TEST(EbmLoss, AntisymmetricUnderSwap) {
  Models m;
  Tensor p = random_tensor({3, 2, 2, 1}, 1), n = random_tensor({3, 2, 2, 1}, 2);
  LossAndGrad a = ebm_loss(p, n, m.hat), b = ebm_loss(n, p, m.hat);
  EXPECT_NEAR(a.loss, -b.loss, 1e-15);
  for (std::size_t t = 0; t < a.grad.tensors.size(); ++t) {
    for (std::size_t i = 0; i < a.grad.tensors[t].size(); ++i) {
      EXPECT_NEAR(a.grad.tensors[t][i], -b.grad.tensors[t][i], 1e-14);
    }
  }
}

TEST(EbmLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng r(40 + s);
    Model hat = build_hat_network(tiny_arch(), r);
    Tensor p = random_tensor({3, 2, 2, 1}, s + 1), n = random_tensor({3, 2, 2, 1}, s + 100);
    LossAndGrad l = ebm_loss(p, n, hat);
    auto coords = sample_coords(hat.params, 25, s);
    auto f = [&](const ParamSet& ps) { return ebm_loss(p, n, Model{hat.net, ps}).loss; };
    EXPECT_LT(rel_error(pick(l.grad, coords), numeric_param_gradient(f, hat.params, coords)), 1e-6);
  }
}

TEST(GeneratorLoss, ExactTargetGivesZero) {
  Models m;
  Tensor z = random_tensor({3, 3}, 1);
  EXPECT_EQ(generator_loss(z, m.gen(z), m.gen, 1.0 / std::sqrt(2.0)).loss, 0.0);
}

TEST(GeneratorLoss, ScalarCase) {
  ArchConfig a = tiny_arch({1, 1, 1}, {1});
  Rng r(2);
  Model g = build_generator(a, r);
  Tensor z({1, 1}, std::vector<double>{0.4});
  Tensor target = g(z);
  target[0] -= 1.0;
  EXPECT_NEAR(generator_loss(z, target, g, 1.0 / std::sqrt(2.0)).loss, 1.0, 1e-15);
  EXPECT_THROW(generator_loss(z, Tensor({2, 1, 1, 1}), g, 1.0), Error);
}

TEST(GeneratorLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng r(60 + s);
    Model g = build_generator(tiny_arch(), r);
    Tensor z = random_tensor({3, 3}, s + 1), x = random_tensor({3, 2, 2, 1}, s + 2, 0.5);
    LossAndGrad l = generator_loss(z, x, g, 0.6);
    auto coords = sample_coords(g.params, 25, s);
    auto f = [&](const ParamSet& ps) { return generator_loss(z, x, Model{g.net, ps}, 0.6).loss; };
    EXPECT_LT(rel_error(pick(l.grad, coords), numeric_param_gradient(f, g.params, coords)), 1e-6);
  }
}

TEST(LatentInference, DriftMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng r(80 + s);
    Model g = build_generator(tiny_arch(), r);
    Tensor z = random_tensor({2, 3}, s + 1), x = random_tensor({2, 2, 2, 1}, s + 2, 0.5);
    const double tau = 0.8;
    auto f = [&](const Tensor& zz) {
      Tensor d = g(zz) - x;
      return 0.5 * squared_norm(zz) + squared_norm(d) / (2 * tau * tau);
    };
    EXPECT_LT(rel_error(latent_inference_drift(z, x, g, tau), numeric_gradient(f, z)), 1e-6);
  }
}

TEST(LatentInference, ConstantGeneratorShrinks) {
  ArchConfig a = tiny_arch();
  Model g = zero_generator(a);
  Tensor z0 = random_tensor({3, 3}, 1);
  LangevinConfig c;
  c.steps = 1;
  c.eps_latent = 0.3;
  c.temperature = 0.0;
  Tensor z1 = latent_inference_langevin(random_tensor({3, 2, 2, 1}, 2), z0, g, 0.7, c);
  EXPECT_LT(rel_error(z1, (1 - 0.045) * z0), 1e-15);
  c.eps_latent = 0.0;
  c.temperature = 1.0;
  EXPECT_EQ(latent_inference_langevin(random_tensor({3, 2, 2, 1}, 2), z0, g, 0.7, c), z0);
}

TEST(Bank, InitStoresGeneratorOutputs) {
  Models m;
  Rng r(3);
  SampleBank b = bank_init(10, m.gen, r, 4);
  EXPECT_EQ(b.occupancy(), 10u);
  EXPECT_LT(rel_error(b.x(), m.gen(b.z())), 1e-15);
  Rng r2(3);
  EXPECT_EQ(bank_init(10, m.gen, r2, 3).z(), b.z());
}

TEST(Bank, FullDrawReplacesEverything) {
  Models m;
  Rng r(3);
  SampleBank b = bank_init(6, m.gen, r);
  const Tensor old = b.x();
  Tensor nx = random_tensor({6, 2, 2, 1}, 1), nz = random_tensor({6, 3}, 2);
  auto d = bank_draw_replace(b, nx, nz, r);
  std::set<std::size_t> idx(d.indices.begin(), d.indices.end());
  EXPECT_EQ(idx.size(), 6u);
  EXPECT_EQ(changed_rows(old, b.x()), 6u);
  EXPECT_LT(rel_error(d.x, old.gather(d.indices)), 1e-15);
  EXPECT_THROW(bank_draw_replace(b, random_tensor({7, 2, 2, 1}, 1), random_tensor({7, 3}, 2), r), ContractError);
}

TEST(Bank, SingleDrawFrequencyIsUniform) {
  SampleBank b(Tensor({2, 1, 1, 1}), Tensor({2, 1}));
  Rng r(5);
  std::size_t hits0 = 0;
  const std::size_t trials = 20000;
  for (std::size_t t = 0; t < trials; ++t) {
    auto d = bank_draw_replace(b, Tensor({1, 1, 1, 1}), Tensor({1, 1}), r);
    hits0 += d.indices[0] == 0;
  }
  EXPECT_NEAR(static_cast<double>(hits0) / trials, 0.5, 0.025);
}

TEST(Tandem, ZeroRatesFreezeNetsButCycleBank) {
  Models m;
  TrainConfig c = small_cfg();
  c.hat_optimizer.lr = 0.0;
  c.gen_optimizer.lr = 0.0;
  TrainState st = make_train_state(m.hat, m.gen, c, Rng(4));
  for (int k = 0; k < 5; ++k) {
    const Tensor before = st.bank.x();
    tandem_train_step(st, random_tensor({4, 2, 2, 1}, k, 0.5), c);
    EXPECT_EQ(changed_rows(before, st.bank.x()), 4u);
    EXPECT_EQ(st.bank.occupancy(), 12u);
  }
  EXPECT_EQ(st.hat.params, m.hat.params);
  EXPECT_EQ(st.generator.params, m.gen.params);
  EXPECT_EQ(st.step, 5u);
  EXPECT_EQ(st.log.size(), 5u);
}

TEST(Tandem, OverwrittenEntriesAreFreshNegatives) {
  Models m;
  TrainConfig c = small_cfg();
  TrainState st = make_train_state(m.hat, m.gen, c, Rng(4));
  const Rng replay_start = st.rng;
  Rng replay = st.rng;
  ConditionalNegatives neg = conditional_negatives(st.hat, st.generator, c, 4, replay);
  // X - G(Z; phi_{t-1}) is the residual chain result for that Z.
  EnergyDef d;
  d.kind = EnergyKind::conditional;
  d.hat = &m.hat;  // nets before the update
  d.generator = &m.gen;
  tandem_train_step(st, random_tensor({4, 2, 2, 1}, 9, 0.5), c);
  std::size_t matched = 0;
  for (std::size_t i = 0; i < st.bank.capacity(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const auto bx = st.bank.x().sample(i);
      const auto nx = std::as_const(neg.x).sample(j);
      const auto bz = st.bank.z().sample(i);
      const auto nz = std::as_const(neg.z).sample(j);
      if (std::equal(bx.begin(), bx.end(), nx.begin()) && std::equal(bz.begin(), bz.end(), nz.begin())) ++matched;
    }
  }
  EXPECT_EQ(matched, 4u);
  // Replay the chain: z ~ N(0, I) from the step rng, then its seed.
  Rng rr = replay_start;
  Tensor z(Shape{4, 3});
  rr.fill_normal(z.values());
  LangevinConfig lc = c.langevin;
  lc.seed = rr.next_u64();
  Tensor y = conditional_langevin(z, d, lc).y;
  EXPECT_EQ(neg.z, z);
  EXPECT_EQ(neg.x, m.gen(z) + y);
}

TEST(Tandem, StateUntouchedOnNonFiniteLoss) {
  Models m;
  TrainConfig c = small_cfg();
  TrainState st = make_train_state(m.hat, m.gen, c, Rng(4));
  const Tensor bank_before = st.bank.x();
  const std::string rng_before = st.rng.state();
  Tensor bad({4, 2, 2, 1}, 0.0);
  bad[0] = INFINITY;
  EXPECT_THROW(tandem_train_step(st, bad, c), NumericError);
  EXPECT_EQ(st.bank.x(), bank_before);
  EXPECT_EQ(st.rng.state(), rng_before);
  EXPECT_EQ(st.step, 0u);
  EXPECT_EQ(st.hat.params, m.hat.params);
}

// Linear hat H(x) = w x + b on 1-D data fixed at 3, zero generator, SGD,
// temperature 0. Negatives are y_K = -K (eps^2 / 2) w exactly, so the
// closed-loop scalar recurrence w <- w - lr (3 - y_K) predicts every gap.
TEST(Tandem, LinearToyFollowsScalarRecurrence) {
  ArchConfig a = tiny_arch({1, 1, 1}, {1});
  Model hat = linear_hat(a, {0.05});
  Model gen = zero_generator(a);
  TrainConfig c = small_cfg(8);
  c.steps = 200;
  c.bank_capacity = 16;
  c.epsilon_data = 0.0;
  c.langevin.temperature = 0.0;
  c.langevin.steps = 4;
  c.langevin.eps_image = 0.5;
  c.hat_optimizer.type = OptimizerType::sgd;
  c.hat_optimizer.lr = 0.01;
  c.gen_optimizer.lr = 0.0;
  TrainState st = make_train_state(hat, gen, c, Rng(1));
  const Tensor pos({8, 1, 1, 1}, 3.0);
  double w = 0.05;
  const double kc = 4 * 0.5 * 0.5 / 2;
  for (std::size_t t = 0; t < 200; ++t) {
    MetricRow row = tandem_train_step(st, pos, c);
    const double neg = -kc * w;
    EXPECT_NEAR(row.energy_gap, w * (3.0 - neg), 1e-10) << t;
    w -= 0.01 * (3.0 - neg);
  }
  EXPECT_LT(st.log.back().energy_gap, st.log.front().energy_gap);
}

TEST(Anneal, PiecewiseConstantRates) {
  TrainConfig c = small_cfg();
  c.hat_optimizer.lr = 1e-4;
  c.gen_optimizer.lr = 5e-5;
  EXPECT_EQ(anneal_schedule(10, c).hat, 1e-4);
  c.anneal.step = 100;
  EXPECT_EQ(anneal_schedule(99, c).gen, 5e-5);
  EXPECT_DOUBLE_EQ(anneal_schedule(100, c).hat, 1e-5);
  EXPECT_DOUBLE_EQ(anneal_schedule(5000, c).gen, 5e-6);
}

TEST(Refine, GeneratorStaysFrozen) {
  Models m;
  TrainConfig c = small_cfg();
  c.mode = TrainMode::refine;
  c.energy = EnergyKind::joint_with_prior;
  c.prior_sigma = 0.25;
  c.gen_optimizer.lr = 0.0;
  c.steps = 6;
  TrainState st = make_train_state(m.hat, m.gen, c, Rng(4));
  DatasetSpec ds;
  ds.source = "builtin:noise";
  ds.image_shape = {2, 2, 1};
  ds.limit = 40;
  ds.batch_size = 4;
  BatchStream data = load_dataset(ds);
  refine_train(st, data, c);
  EXPECT_EQ(st.step, 6u);
  EXPECT_EQ(st.generator.params, m.gen.params);
  EXPECT_EQ(st.gen_opt.first_moment().squared_norm(), 0.0);
  EXPECT_EQ(st.gen_opt.second_moment().squared_norm(), 0.0);
  EXPECT_NE(st.hat.params, m.hat.params);
}

TEST(Refine, FrozenLatentReducesToConditionalPath) {
  Models m;
  TrainConfig c = small_cfg();
  c.mode = TrainMode::refine;
  c.energy = EnergyKind::joint;
  c.langevin.eps_latent = 0.0;
  Rng a(7), b(7);
  EXPECT_EQ(joint_negatives(m.hat, m.gen, c, 4, a), conditional_negatives(m.hat, m.gen, c, 4, b).x);
}

TEST(Refine, ModeMismatchRejected) {
  Models m;
  TrainConfig c = small_cfg();
  TrainState st = make_train_state(m.hat, m.gen, c, Rng(4));
  DatasetSpec ds;
  ds.source = "builtin:noise";
  ds.image_shape = {2, 2, 1};
  ds.limit = 8;
  ds.batch_size = 4;
  BatchStream data = load_dataset(ds);
  EXPECT_THROW(refine_train(st, data, c), ConfigError);
}

// Generator G(z) = tanh(0.5 R z) (rotation R) against data clustered at
// (0.5, -0.3): refinement moves samples toward the data.
TEST(Refine, ToyRefinementReducesEnergyDistance) {
  ArchConfig a = tiny_arch({1, 1, 2}, {2}, 32);
  a.gen_depth = 0;
  Rng r(5);
  Model gen = build_generator(a, r);
  Tensor& gw = param(gen.params, "gen.out.w");
  const double ct = std::cos(0.7) * 0.5, sn = std::sin(0.7) * 0.5;
  gw[0] = ct;
  gw[1] = sn;
  gw[2] = -sn;
  gw[3] = ct;
  param(gen.params, "gen.out.b").fill(0.0);
  Model hat = build_hat_network(a, r);

  Tensor data({2000, 1, 1, 2});
  Rng dr(6);
  for (std::size_t i = 0; i < 2000; ++i) {
    data.sample(i)[0] = 0.5 + 0.05 * dr.normal();
    data.sample(i)[1] = -0.3 + 0.05 * dr.normal();
  }
  TrainConfig c = small_cfg(64);
  c.mode = TrainMode::refine;
  c.energy = EnergyKind::joint;
  c.steps = 1500;
  c.epsilon_data = 0.0;
  c.langevin.steps = 20;
  c.langevin.eps_image = 0.05;
  c.langevin.eps_latent = 0.1;
  c.hat_optimizer.lr = 1e-3;
  c.gen_optimizer.lr = 0.0;
  TrainState st = make_train_state(hat, gen, c, Rng(8));
  Rng s0(9);
  Tensor before = draw_samples(st.hat, st.generator, c, 600, s0);
  BatchStream stream(std::make_shared<const Tensor>(data), 64, 3, false);
  refine_train(st, stream, c);
  Rng s1(9);
  Tensor after = draw_samples(st.hat, st.generator, c, 600, s1);
  Tensor ref = data.gather(std::vector<std::size_t>{0, 1, 2, 3});
  std::vector<std::size_t> idx(600);
  for (std::size_t i = 0; i < 600; ++i) idx[i] = i;
  ref = data.gather(idx);
  const double e0 = energy_distance(before, ref), e1 = energy_distance(after, ref);
  EXPECT_LT(e1, e0);
}

TEST(Retrofit, ImageLatentsAndSphereRadius) {
  ArchConfig a = tiny_arch({4, 4, 1}, {16, 16, 1}, 8);
  Rng r(3);
  Model hat = build_hat_network(a, r);
  Model gen = build_generator(a, r);
  TrainConfig c = small_cfg();
  c.mode = TrainMode::retrofit;
  c.energy = EnergyKind::joint_with_prior;
  c.prior_sigma = 0.1;
  c.gen_optimizer.lr = 0.0;
  c.steps = 3;
  c.validate();
  TrainState st = make_train_state(hat, gen, c, Rng(4));
  DatasetSpec ds;
  ds.source = "builtin:noise";
  ds.image_shape = {4, 4, 1};
  ds.limit = 12;
  ds.batch_size = 4;
  BatchStream data = load_dataset(ds);
  retrofit_train(st, data, c);
  EXPECT_EQ(st.step, 3u);
  EXPECT_EQ(st.generator.params, gen.params);

  Rng zr(12);
  auto init = init_negative_states(200, {16, 16, 1}, {4, 4, 1}, zr);
  double mean_norm = 0;
  for (double n2 : per_sample_squared_norm(init.z0)) mean_norm += std::sqrt(n2) / 200;
  EXPECT_NEAR(mean_norm / 16.0, 1.0, 0.02);
}

TEST(Autoencoder, TwoSampleLossIsMeanSquaredError) {
  ArchConfig a = tiny_arch({2, 2, 1}, {3});
  Rng r(1);
  Model inf = build_inference_network(a, r);
  Model gen = build_generator(a, r);
  Tensor x = random_tensor({2, 2, 2, 1}, 2, 0.5);
  ReconstructionLoss l = reconstruction_loss(x, inf, gen);
  Tensor rec = gen(sphere_project(inf(x)));
  double s = 0;
  for (std::size_t i = 0; i < 8; ++i) s += (rec[i] - x[i]) * (rec[i] - x[i]);
  EXPECT_NEAR(l.loss, s / 8.0, 1e-15);
  for (double n2 : per_sample_squared_norm(l.latents)) EXPECT_NEAR(std::sqrt(n2), std::sqrt(3.0), 1e-12);
}

TEST(Autoencoder, ReconstructionGradientsMatchFiniteDifferences) {
  ArchConfig a = tiny_arch({2, 2, 1}, {3});
  Rng r(1);
  Model inf = build_inference_network(a, r);
  Model gen = build_generator(a, r);
  Tensor x = random_tensor({3, 2, 2, 1}, 2, 0.5);
  ReconstructionLoss l = reconstruction_loss(x, inf, gen);
  auto ci = sample_coords(inf.params, 20, 1);
  auto fi = [&](const ParamSet& p) { return reconstruction_loss(x, Model{inf.net, p}, gen).loss; };
  EXPECT_LT(rel_error(pick(l.inference_grad, ci), numeric_param_gradient(fi, inf.params, ci)), 1e-6);
  auto cg = sample_coords(gen.params, 20, 2);
  auto fg = [&](const ParamSet& p) { return reconstruction_loss(x, inf, Model{gen.net, p}).loss; };
  EXPECT_LT(rel_error(pick(l.generator_grad, cg), numeric_param_gradient(fg, gen.params, cg)), 1e-6);
}

TEST(Autoencoder, OverfitsFourImages) {
  ArchConfig a = tiny_arch({2, 2, 1}, {4}, 32);
  Tensor images({4, 2, 2, 1}, std::vector<double>{0.5, -0.5, 0.2, 0.1, -0.3, 0.4, 0.6, -0.2,
                                                  0.1, 0.1, -0.6, 0.3, 0.7, -0.1, -0.4, 0.2});
  AutoencoderConfig c;
  c.epochs = 3000;
  c.batch_size = 4;
  c.optimizer.lr = 3e-3;
  c.seed = 2;
  AutoencoderResult res = autoencoder_pretrain(images, a, c);
  EXPECT_LT(res.epoch_loss.back(), 1e-3);
  EXPECT_LT(res.max_latent_norm_error, 1e-9);
}

TEST(Optimizer, ZeroRateKeepsParamsBitwise) {
  Models m;
  Optimizer opt(m.hat.params, OptimizerSpec{});
  ParamSet p = m.hat.params;
  ParamSet g = p;
  opt.step(p, g, 0.0);
  EXPECT_EQ(p, m.hat.params);
  EXPECT_EQ(opt.iterations(), 1u);
}

TEST(Optimizer, AdamFirstStepIsSignedLearningRate) {
  ParamSet p;
  p.names = {"a"};
  p.tensors = {Tensor({3}, std::vector<double>{1, 2, 3})};
  ParamSet g = p;
  g.tensors[0] = Tensor({3}, std::vector<double>{0.5, -2, 0});
  Optimizer opt(p, OptimizerSpec{});
  opt.step(p, g, 0.1);
  EXPECT_NEAR(p.tensors[0][0], 0.9, 1e-7);
  EXPECT_NEAR(p.tensors[0][1], 2.1, 1e-7);
  EXPECT_EQ(p.tensors[0][2], 3.0);
}

TEST(Optimizer, ClipScalesToThreshold) {
  ParamSet p;
  p.names = {"a"};
  p.tensors = {Tensor({2}, std::vector<double>{0, 0})};
  ParamSet g = p;
  g.tensors[0] = Tensor({2}, std::vector<double>{30, 40});
  OptimizerSpec s;
  s.type = OptimizerType::sgd;
  s.clip = 5.0;
  Optimizer opt(p, s);
  EXPECT_DOUBLE_EQ(opt.step(p, g, 1.0), 50.0);
  EXPECT_NEAR(p.tensors[0][0], -3.0, 1e-15);
  EXPECT_NEAR(p.tensors[0][1], -4.0, 1e-15);
}

TEST(MetricLog, CsvRoundTripIsBitwise) {
  std::vector<MetricRow> log{{0, 0.1, 1.0 / 3, -2e-300, 5.5, 1e10, 0.3, -0.7}, {1, -1, 2, 3, 4, 5, 6, 7}};
  auto p = std::filesystem::temp_directory_path() / "hatebm_test_log.csv";
  write_metric_log(p, log);
  auto back = read_metric_log(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(same_bits(back[0].gen_loss, 1.0 / 3));
  EXPECT_TRUE(same_bits(back[0].energy_gap, -2e-300));
  EXPECT_EQ(back[1].step, 1u);
}
