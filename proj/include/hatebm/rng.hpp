#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hatebm {

// SplitMix64 finalizer; used to derive independent seeds from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

// Seeded random stream. All randomness in the library flows through this
// type so that a saved state string restores a trajectory exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();
  std::size_t below(std::size_t n);

  void fill_normal(std::span<double> out, double scale = 1.0);

  // Child stream keyed by (one draw from this stream, index).
  Rng split(std::uint64_t index);

  std::vector<std::size_t> permutation(std::size_t n);
  // k distinct indices drawn uniformly from [0, n).
  std::vector<std::size_t> choose_unique(std::size_t n, std::size_t k);

  std::string state() const;
  void set_state(const std::string& state);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hatebm
