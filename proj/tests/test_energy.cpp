#include <gtest/gtest.h>

#include <cmath>

#include "hatebm/energy.hpp"
#include "hatebm/error.hpp"
#include "oracles.hpp"

using namespace hatebm;
using namespace hatebm::testing;

namespace {

struct Fixture {
  ArchConfig arch = tiny_arch();
  Rng rng{7};
  Model hat = build_hat_network(arch, rng);
  Model gen = build_generator(arch, rng);
  Model disc = build_hat_network(arch, rng);
};

// Linear hat H(x) = <w, x> (no hidden layers) and an all-zero generator.
Model linear_hat(const ArchConfig& base, const Tensor& w) {
  ArchConfig a = base;
  a.hat_depth = 0;
  Rng r(0);
  Model m = build_hat_network(a, r);
  param(m.params, "hat.out.w") = w.reshaped(param(m.params, "hat.out.w").shape());
  param(m.params, "hat.out.b").fill(0.0);
  return m;
}

Model zero_generator(const ArchConfig& a) {
  Rng r(0);
  Model g = build_generator(a, r);
  for (auto& t : g.params.tensors) t.fill(0.0);
  return g;
}

EnergyDef def(EnergyKind k, const Fixture& f, std::optional<double> sigma = std::nullopt,
              PriorPlacement on = PriorPlacement::y) {
  EnergyDef d;
  d.kind = k;
  d.hat = &f.hat;
  d.generator = &f.gen;
  d.discriminator = &f.disc;
  d.prior_sigma = sigma;
  d.prior_on = on;
  return d;
}

double sum(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST(Energy, ThreeWayIdentityAtZeroResidual) {
  Fixture f;
  Tensor z = random_tensor({6, 3}, 1);
  Tensor y({6, 2, 2, 1});
  auto j = joint_energy(y, z, f.hat, f.gen);
  auto a = ablation_energy_no_residual(z, f.hat, f.gen);
  auto h = hat_energy(f.gen(z), f.hat);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_TRUE(same_bits(j[i], a[i]));
    EXPECT_TRUE(same_bits(j[i], h[i]));
  }
}

TEST(Energy, JointEqualsManualComposition) {
  Fixture f;
  Tensor z = random_tensor({4, 3}, 2), y = random_tensor({4, 2, 2, 1}, 3, 0.2);
  Tensor x = f.gen(z);
  x += y;
  auto manual = f.hat(x);
  auto j = joint_energy(y, z, f.hat, f.gen);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(same_bits(j[i], manual[i]));
}

TEST(Energy, LinearHatZeroGenerator) {
  Fixture f;
  Tensor w = random_tensor({4}, 4);
  Model hat = linear_hat(f.arch, w);
  Model gen = zero_generator(f.arch);
  Tensor y = random_tensor({3, 2, 2, 1}, 5);
  auto e = joint_energy(y, random_tensor({3, 3}, 6), hat, gen);
  for (std::size_t i = 0; i < 3; ++i) {
    double expect = 0;
    for (std::size_t k = 0; k < 4; ++k) expect += w[k] * y.sample(i)[k];
    EXPECT_NEAR(e[i], expect, 1e-14);
  }
  for (double v : ablation_energy_no_residual(random_tensor({3, 3}, 7), hat, gen)) EXPECT_EQ(v, 0.0);
}

TEST(Energy, PriorExamples) {
  Fixture f;
  Tensor z = random_tensor({3, 3}, 1), y = random_tensor({3, 2, 2, 1}, 2);
  auto j = joint_energy(y, z, f.hat, f.gen);
  auto p0 = joint_energy_with_prior(Tensor({3, 2, 2, 1}), z, f.hat, f.gen, 0.3);
  auto j0 = joint_energy(Tensor({3, 2, 2, 1}), z, f.hat, f.gen);
  EXPECT_EQ(p0, j0);
  auto pbig = joint_energy_with_prior(y, z, f.hat, f.gen, 1e6);
  auto n2 = per_sample_squared_norm(y);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(std::abs(pbig[i] - j[i]), 1e-6 * n2[i]);
  auto p = joint_energy_with_prior(y, z, f.hat, f.gen, 0.5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i] - j[i], n2[i] / (2 * 0.25), 1e-12);

  Model zero_hat = linear_hat(f.arch, Tensor({4}));
  Tensor y2({1, 2, 2, 1}, std::vector<double>{1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(joint_energy_with_prior(y2, Tensor({1, 3}), zero_hat, f.gen, 1.0)[0], 1.0);
  EXPECT_THROW(joint_energy_with_prior(y, z, f.hat, f.gen, 0.0), Error);
}

TEST(Energy, DdlsExamples) {
  Fixture f;
  Model zero_d = linear_hat(f.arch, Tensor({4}));
  Tensor z({1, 3}, std::vector<double>{0, 2, 0});
  EXPECT_DOUBLE_EQ(ddls_energy(z, zero_d, f.gen)[0], 2.0);
  Tensor z0({1, 3});
  EXPECT_EQ(ddls_energy(z0, f.disc, f.gen)[0], f.disc(f.gen(z0))[0]);
  Tensor zr = random_tensor({4, 3}, 3);
  auto e = ddls_energy(zr, f.disc, f.gen);
  auto d = f.disc(f.gen(zr));
  auto n2 = per_sample_squared_norm(zr);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(e[i], d[i] + 0.5 * n2[i], 1e-14);
}

TEST(Energy, AblationBatchEqualsLoop) {
  Fixture f;
  Tensor z = random_tensor({5, 3}, 8);
  auto batch = ablation_energy_no_residual(z, f.hat, f.gen);
  for (std::size_t i = 0; i < 5; ++i) {
    Tensor one({1, 3});
    std::copy(z.sample(i).begin(), z.sample(i).end(), one.data());
    EXPECT_NEAR(ablation_energy_no_residual(one, f.hat, f.gen)[0], batch[i], 1e-13);
  }
}

TEST(Energy, ResidualGradientIsHatInputGradient) {
  Fixture f;
  Tensor z = random_tensor({3, 3}, 1), y = random_tensor({3, 2, 2, 1}, 2, 0.1);
  Tensor gy = energy_grad(def(EnergyKind::joint, f), Variable::y, {Tensor(), y, z});
  Tensor x = f.gen(z);
  x += y;
  EXPECT_EQ(gy, hat_energy_and_grad(x, f.hat).grad);
}

TEST(Energy, QuadraticPriorGradient) {
  // Zero hat with prior on z at sigma 1: energy |z|^2 / 2, gradient z.
  Fixture f;
  Model zero_hat = linear_hat(f.arch, Tensor({4}));
  EnergyDef d;
  d.kind = EnergyKind::joint_with_prior;
  d.hat = &zero_hat;
  d.generator = &f.gen;
  d.prior_sigma = 1.0;
  d.prior_on = PriorPlacement::z;
  Tensor z = random_tensor({2, 3}, 4);
  EXPECT_LT(rel_error(energy_grad(d, Variable::z, {Tensor(), Tensor({2, 2, 2, 1}), z}), z), 1e-15);
}

TEST(Energy, ConditionalRejectsLatentGradient) {
  Fixture f;
  EXPECT_THROW(energy_grad(def(EnergyKind::conditional, f), Variable::z,
                           {Tensor(), Tensor({1, 2, 2, 1}), Tensor({1, 3})}),
               ContractError);
}

TEST(Energy, ConstantShiftLeavesGradientsUnchanged) {
  Fixture f;
  Tensor z = random_tensor({3, 3}, 1), y = random_tensor({3, 2, 2, 1}, 2, 0.1);
  EnergyDef d = def(EnergyKind::joint, f);
  Tensor gy = energy_grad(d, Variable::y, {Tensor(), y, z});
  Tensor gz = energy_grad(d, Variable::z, {Tensor(), y, z});
  Model shifted = f.hat;
  param(shifted.params, "hat.out.b")[0] += 12.5;
  d.hat = &shifted;
  EXPECT_LT(rel_error(energy_grad(d, Variable::y, {Tensor(), y, z}), gy), 1e-15);
  EXPECT_LT(rel_error(energy_grad(d, Variable::z, {Tensor(), y, z}), gz), 1e-15);
}

// Reverse-mode gradients of every energy kind and variable against central
// differences on ten random points each.
TEST(Energy, GradientsMatchFiniteDifferences) {
  struct Case {
    EnergyKind kind;
    Variable wrt;
    std::optional<double> sigma;
    PriorPlacement on;
  };
  const Case cases[] = {
      {EnergyKind::plain, Variable::x, {}, PriorPlacement::y},
      {EnergyKind::joint, Variable::y, {}, PriorPlacement::y},
      {EnergyKind::joint, Variable::z, {}, PriorPlacement::y},
      {EnergyKind::joint_with_prior, Variable::y, 0.4, PriorPlacement::y},
      {EnergyKind::joint_with_prior, Variable::z, 0.4, PriorPlacement::z},
      {EnergyKind::conditional, Variable::y, {}, PriorPlacement::y},
      {EnergyKind::no_residual_ablation, Variable::z, {}, PriorPlacement::y},
      {EnergyKind::ddls, Variable::z, {}, PriorPlacement::y},
  };
  for (const Case& c : cases) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      Fixture f;
      f.rng = Rng(100 + s);
      f.hat = build_hat_network(f.arch, f.rng);
      f.gen = build_generator(f.arch, f.rng);
      f.disc = build_hat_network(f.arch, f.rng);
      EnergyDef d = def(c.kind, f, c.sigma, c.on);
      EnergyPoint pt{random_tensor({2, 2, 2, 1}, 10 * s + 1, 0.5), random_tensor({2, 2, 2, 1}, 10 * s + 2, 0.3),
                     random_tensor({2, 3}, 10 * s + 3)};
      Tensor g = energy_grad(d, c.wrt, pt);
      Tensor& var = c.wrt == Variable::x ? pt.x : (c.wrt == Variable::y ? pt.y : pt.z);
      auto fun = [&](const Tensor& v) {
        EnergyPoint q = pt;
        (c.wrt == Variable::x ? q.x : (c.wrt == Variable::y ? q.y : q.z)) = v;
        return sum(evaluate_energy(d, q));
      };
      EXPECT_LT(rel_error(g, numeric_gradient(fun, var)), 1e-6)
          << to_string(c.kind) << " seed " << s;
    }
  }
}

TEST(Energy, NonFiniteHatOutputIsFatal) {
  Fixture f;
  Tensor x({1, 2, 2, 1}, std::vector<double>{NAN, 0, 0, 0});
  EXPECT_THROW(hat_energy(x, f.hat), NumericError);
}
