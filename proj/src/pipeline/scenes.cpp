#include "prodehaze/pipeline/scenes.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "prodehaze/seed.hpp"

namespace prodehaze::pipeline {

namespace {

// HSV with S = 1.
std::array<double, 3> saturated(double hue, double value) {
  const double h6 = std::fmod(hue, 1.0) * 6.0;
  const int sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  const double rise = value * f, fall = value * (1.0 - f);
  switch (sector) {
    case 0: return {value, rise, 0.0};
    case 1: return {fall, value, 0.0};
    case 2: return {0.0, value, rise};
    case 3: return {0.0, fall, value};
    case 4: return {rise, 0.0, value};
    default: return {value, 0.0, fall};
  }
}

}  // namespace

ImageTensor quantize8(ImageTensor img) {
  for (double& v : img.values()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return img;
}

ImageTensor make_scene(std::uint64_t seed, std::size_t height, std::size_t width) {
  Rng rng(seed);
  ImageTensor img(height, width, 3);
  const double h = static_cast<double>(height), w = static_cast<double>(width);

  const double bg_hue = rng.uniform();
  const double v_top = rng.uniform(0.4, 1.0), v_bottom = rng.uniform(0.4, 1.0);
  for (std::size_t y = 0; y < height; ++y) {
    const double f = height > 1 ? static_cast<double>(y) / (h - 1.0) : 0.0;
    const auto c = saturated(bg_hue, v_top + (v_bottom - v_top) * f);
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
  }

  const std::size_t shapes = 3 + static_cast<std::size_t>(rng.index(4));
  for (std::size_t s = 0; s < shapes; ++s) {
    const bool disc = rng.uniform() < 0.5;
    const double cy = rng.uniform(0.0, h), cx = rng.uniform(0.0, w);
    const double ry = rng.uniform(0.1, 0.3) * h, rx = disc ? ry : rng.uniform(0.1, 0.3) * w;
    const double hue = rng.uniform(), value = rng.uniform(0.5, 1.0);
    const std::size_t stripe = rng.uniform() < 0.4 ? 2 + static_cast<std::size_t>(rng.index(3)) : 0;
    const auto base = saturated(hue, value);
    const auto dim = saturated(hue, 0.5 * value);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
        const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (!inside) continue;
        const auto& c = stripe != 0 && (x / stripe) % 2 == 1 ? dim : base;
        for (std::size_t k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
      }
    }
  }
  return quantize8(std::move(img));
}

}  // namespace prodehaze::pipeline
