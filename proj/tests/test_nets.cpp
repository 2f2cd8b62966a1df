#include <gtest/gtest.h>

#include <cmath>

#include "hatebm/error.hpp"
#include "hatebm/nets.hpp"
#include "oracles.hpp"

using namespace hatebm;
using namespace hatebm::testing;

namespace {

ArchConfig conv_arch() {
  ArchConfig a;
  a.image_shape = {8, 8, 3};
  a.latent_shape = {6};
  a.hat_width = 4;
  a.hat_depth = 2;
  a.gen_width = 4;
  a.gen_depth = 2;
  return a;
}

}  // namespace

TEST(Nets, HatGivesOneFiniteScalarPerImage) {
  for (Topology t : {Topology::conv, Topology::mlp}) {
    ArchConfig a = conv_arch();
    a.topology = t;
    Rng r(1);
    Model hat = build_hat_network(a, r);
    Tensor x = random_tensor({5, 8, 8, 3}, 2, 0.5);
    Tensor e = hat(x);
    EXPECT_EQ(e.size(), 5u);
    EXPECT_TRUE(e.all_finite());
  }
}

TEST(Nets, HatRejectsWrongImageSize) {
  Rng r(1);
  Model hat = build_hat_network(conv_arch(), r);
  EXPECT_THROW(hat(Tensor({2, 4, 4, 3})), Error);
}

TEST(Nets, DuplicateImagesGetIdenticalEnergies) {
  Rng r(1);
  Model hat = build_hat_network(conv_arch(), r);
  Tensor x = random_tensor({3, 8, 8, 3}, 3);
  std::copy(x.sample(0).begin(), x.sample(0).end(), x.sample(2).begin());
  Tensor e = hat(x);
  EXPECT_TRUE(same_bits(e[0], e[2]));
}

TEST(Nets, GeneratorShapeRangeAndBatchIndependence) {
  for (Topology t : {Topology::conv, Topology::mlp}) {
    ArchConfig a = conv_arch();
    a.topology = t;
    Rng r(4);
    Model g = build_generator(a, r);
    Tensor z = random_tensor({64, 6}, 5, 3.0);
    Tensor x = g(z);
    EXPECT_EQ(x.shape(), (Shape{64, 8, 8, 3}));
    for (double v : x.values()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(g(z), x);
    Tensor one({1, 6});
    std::copy(z.sample(17).begin(), z.sample(17).end(), one.data());
    Tensor x1 = g(one);
    for (std::size_t k = 0; k < x1.size(); ++k) EXPECT_NEAR(x1[k], x.sample(17)[k], 1e-12);
  }
}

TEST(Nets, InferenceNetworkShapes) {
  ArchConfig a;
  a.latent_shape = {128};
  a.hat_width = a.gen_width = 4;
  Rng r(1);
  EXPECT_EQ(build_inference_network(a, r)(Tensor({2, 32, 32, 3})).shape(), (Shape{2, 128}));
  a.latent_shape = {16, 16, 1};
  EXPECT_EQ(build_inference_network(a, r)(Tensor({2, 32, 32, 3})).shape(), (Shape{2, 16, 16, 1}));
}

TEST(Nets, ImageLatentGeneratorHasNoDenseStem) {
  ArchConfig a;
  a.latent_shape = {16, 16, 1};
  a.hat_width = a.gen_width = 4;
  Rng r(1);
  Model g = build_generator(a, r);
  for (const auto& n : g.params.names) EXPECT_EQ(n.find("fc"), std::string::npos) << n;
  EXPECT_EQ(g(Tensor({2, 16, 16, 1})).shape(), (Shape{2, 32, 32, 3}));
}

TEST(Nets, ParamCountIsFunctionOfArchitecture) {
  Rng r1(1), r2(99);
  EXPECT_EQ(build_hat_network(conv_arch(), r1).params.count(), build_hat_network(conv_arch(), r2).params.count());
  EXPECT_EQ(make_hat_network(conv_arch())->param_count(), build_hat_network(conv_arch(), r1).params.count());
}

TEST(Nets, SphereProjectExamples) {
  Tensor v({1, 4}, std::vector<double>{1, 0, 0, 0});
  EXPECT_EQ(sphere_project(v), Tensor({1, 4}, std::vector<double>{2, 0, 0, 0}));
  Tensor on({1, 4}, std::vector<double>{1, 1, 1, 1});
  EXPECT_EQ(sphere_project(on), on);
  Tensor big = random_tensor({7, 256}, 3);
  Tensor p = sphere_project(big);
  for (double n2 : per_sample_squared_norm(p)) EXPECT_NEAR(std::sqrt(n2), 16.0, 16e-6);
  EXPECT_THROW(sphere_project(Tensor({1, 4})), Error);
}

TEST(Nets, SphereProjectIdempotentAndScaleInvariant) {
  Tensor v = random_tensor({5, 9}, 8);
  Tensor p = sphere_project(v);
  EXPECT_LT(rel_error(sphere_project(p), p), 1e-14);
  EXPECT_LT(rel_error(sphere_project(3.5 * v), p), 1e-14);
}

TEST(Nets, SphereProjectBackwardMatchesFiniteDifferences) {
  Tensor v = random_tensor({3, 5}, 9);
  Tensor w = random_tensor({3, 5}, 10);
  auto f = [&](const Tensor& x) { return dot(sphere_project(x), w); };
  EXPECT_LT(rel_error(sphere_project_backward(v, w), numeric_gradient(f, v)), 1e-7);
}

// Input gradients of every forward map against central differences.
TEST(Nets, InputGradientsMatchFiniteDifferences) {
  for (Topology t : {Topology::conv, Topology::mlp}) {
    ArchConfig a = conv_arch();
    a.image_shape = {4, 4, 2};
    a.latent_shape = {3};
    a.hat_depth = 1;
    a.gen_depth = 1;
    a.topology = t;
    a.hat_activation = Activation::silu;
    a.gen_activation = Activation::softplus;
    for (NetKind kind : {NetKind::hat, NetKind::generator, NetKind::inference}) {
      Rng r(21);
      Model m = build_network(kind, a, r);
      const Shape in = m.net->input_shape();
      Shape batch_in{2};
      batch_in.insert(batch_in.end(), in.begin(), in.end());
      Tensor x = random_tensor(batch_in, 22, 0.7);
      Tensor probe = random_tensor(m(x).shape(), 23);
      auto f = [&](const Tensor& xx) { return dot(m(xx), probe); };
      Tape tape;
      m.net->forward(m.params, x, tape);
      Tensor g = m.net->backward(m.params, tape, probe, nullptr);
      EXPECT_LT(rel_error(g, numeric_gradient(f, x)), 1e-6) << static_cast<int>(kind) << " " << static_cast<int>(t);
    }
  }
}

TEST(Nets, ParameterGradientsMatchFiniteDifferences) {
  ArchConfig a = conv_arch();
  a.image_shape = {4, 4, 2};
  a.hat_depth = 1;
  a.hat_activation = Activation::softplus;
  Rng r(3);
  Model m = build_hat_network(a, r);
  Tensor x = random_tensor({3, 4, 4, 2}, 4);
  Tensor probe = random_tensor({3, 1}, 5);
  Tape tape;
  m.net->forward(m.params, x, tape);
  ParamSet grads = m.params.zeros_like();
  m.net->backward(m.params, tape, probe.reshaped(m(x).shape()), &grads);
  auto coords = sample_coords(m.params, 30, 6);
  auto f = [&](const ParamSet& p) { return dot(m.net->forward(p, x), probe.reshaped(m(x).shape())); };
  EXPECT_LT(rel_error(pick(grads, coords), numeric_param_gradient(f, m.params, coords)), 1e-6);
}
