#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "prodehaze/image_tensor.hpp"

namespace prodehaze {

// Seed derivation rule used everywhere: splitmix64(root ^ fnv1a64(label)).
// Components never share a generator; each derives its own stream from the
// root seed and a stable label ("synth/params/3", "spr/step/17", ...).
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);
std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return normal_(engine_); }
  std::uint64_t index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  ImageTensor normal_tensor(std::size_t h, std::size_t w, std::size_t c, double scale = 1.0);
  ImageTensor uniform_tensor(std::size_t h, std::size_t w, std::size_t c, double lo = 0.0,
                             double hi = 1.0);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace prodehaze
