#include "oracles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "hatebm/rng.hpp"

namespace hatebm::testing {

namespace {

double row_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  auto ra = a.sample(i);
  auto rb = b.sample(j);
  double s = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    const double d = ra[k] - rb[k];
    s += d * d;
  }
  return std::sqrt(s);
}

double mean_pair_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.batch(); ++i) {
    for (std::size_t j = 0; j < b.batch(); ++j) s += row_distance(a, i, b, j);
  }
  return s / static_cast<double>(a.batch() * b.batch());
}

}  // namespace

double energy_distance(const Tensor& a, const Tensor& b) {
  if (a.sample_size() != b.sample_size()) throw std::invalid_argument("energy_distance: dimension mismatch");
  return 2.0 * mean_pair_distance(a, b) - mean_pair_distance(a, a) - mean_pair_distance(b, b);
}

double auroc_pairs(const std::vector<double>& in, const std::vector<double>& out) {
  double wins = 0.0;
  for (double o : out) {
    for (double i : in) wins += o > i ? 1.0 : (o == i ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(in.size() * out.size());
}

Tensor numeric_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor g(x.shape());
  Tensor p = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    p[i] = v + h;
    const double up = f(p);
    p[i] = v - h;
    const double dn = f(p);
    p[i] = v;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

std::vector<ParamCoord> sample_coords(const ParamSet& p, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ParamCoord> out;
  // Every tensor at least once, then random fill.
  for (std::size_t t = 0; t < p.tensors.size() && out.size() < count; ++t) {
    out.push_back({t, rng.below(p.tensors[t].size())});
  }
  while (out.size() < count) {
    const std::size_t t = rng.below(p.tensors.size());
    out.push_back({t, rng.below(p.tensors[t].size())});
  }
  return out;
}

std::vector<double> numeric_param_gradient(const std::function<double(const ParamSet&)>& f, const ParamSet& p,
                                           const std::vector<ParamCoord>& coords, double h) {
  std::vector<double> out;
  ParamSet q = p;
  for (const auto& c : coords) {
    double& v = q.tensors[c.tensor][c.element];
    const double v0 = v;
    v = v0 + h;
    const double up = f(q);
    v = v0 - h;
    const double dn = f(q);
    v = v0;
    out.push_back((up - dn) / (2.0 * h));
  }
  return out;
}

std::vector<double> pick(const ParamSet& grad, const std::vector<ParamCoord>& coords) {
  std::vector<double> out;
  for (const auto& c : coords) out.push_back(grad.tensors[c.tensor][c.element]);
  return out;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

double rel_error(const Tensor& a, const Tensor& b, double floor) {
  return rel_error(std::vector<double>(a.values().begin(), a.values().end()),
                   std::vector<double>(b.values().begin(), b.values().end()), floor);
}

Tensor& param(ParamSet& p, const std::string& name) {
  for (std::size_t i = 0; i < p.names.size(); ++i) {
    if (p.names[i] == name) return p.tensors[i];
  }
  throw std::out_of_range("no parameter " + name);
}

ArchConfig tiny_arch(Shape image, Shape latent, std::size_t width) {
  ArchConfig a;
  a.image_shape = std::move(image);
  a.latent_shape = std::move(latent);
  a.topology = Topology::mlp;
  a.hat_width = width;
  a.hat_depth = 2;
  a.gen_width = width;
  a.gen_depth = 2;
  a.hat_activation = Activation::silu;
  a.gen_activation = Activation::tanh;
  return a;
}

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  rng.fill_normal(t.values(), scale);
  return t;
}

std::vector<std::size_t> ring_mode_counts(const Tensor& samples, std::size_t modes, double radius, double sigma) {
  std::vector<std::size_t> counts(modes + 1, 0);
  for (std::size_t i = 0; i < samples.batch(); ++i) {
    auto s = samples.sample(i);
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < modes; ++k) {
      const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(modes);
      const double d = std::hypot(s[0] - radius * std::cos(t), s[1] - radius * std::sin(t));
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    ++counts[best_d < 3.0 * sigma ? best : modes];
  }
  return counts;
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

}  // namespace hatebm::testing
