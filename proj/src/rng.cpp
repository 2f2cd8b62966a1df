#include "hatebm/rng.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "hatebm/error.hpp"

namespace hatebm {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

std::size_t Rng::below(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

void Rng::fill_normal(std::span<double> out, double scale) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : out) {
    v = scale * dist(engine_);
  }
}

Rng Rng::split(std::uint64_t index) { return Rng(mix_seed(engine_(), index)); }

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Fisher-Yates with our own draws; std::shuffle's draw pattern is
  // implementation-defined.
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[below(i)]);
  }
  return idx;
}

std::vector<std::size_t> Rng::choose_unique(std::size_t n, std::size_t k) {
  if (k > n) {
    throw ContractError("choose_unique: cannot draw " + std::to_string(k) + " unique indices from " +
                        std::to_string(n));
  }
  // Partial Fisher-Yates.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) {
    throw IoError("rng: malformed state string");
  }
}

}  // namespace hatebm
