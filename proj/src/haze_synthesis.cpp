#include "prodehaze/haze_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prodehaze/error.hpp"
#include "prodehaze/seed.hpp"

namespace prodehaze {

std::string_view to_string(DepthKind kind) {
  switch (kind) {
    case DepthKind::kLinearRamp: return "linear-ramp";
    case DepthKind::kRadial: return "radial";
    case DepthKind::kValueNoise: return "value-noise";
  }
  return "unknown";
}

DepthKind depth_kind_from_string(std::string_view name) {
  if (name == "linear-ramp") return DepthKind::kLinearRamp;
  if (name == "radial") return DepthKind::kRadial;
  if (name == "value-noise") return DepthKind::kValueNoise;
  fail(ErrorCode::kInvalidArgument, "unknown depth kind: " + std::string(name));
}

nlohmann::json to_json(const HazeParams& p) {
  return {{"atmospheric_light", p.atmospheric_light},
          {"beta", p.beta},
          {"depth_kind", to_string(p.depth_kind)},
          {"seed", p.seed}};
}

HazeParams haze_params_from_json(const nlohmann::json& j) {
  try {
    HazeParams p;
    p.atmospheric_light = j.at("atmospheric_light").get<Rgb>();
    p.beta = j.at("beta").get<double>();
    p.depth_kind = depth_kind_from_string(j.at("depth_kind").get<std::string>());
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorruptHeader, std::string("malformed haze params: ") + e.what());
  }
}

namespace {

void normalize_minmax(ImageTensor& t) {
  const auto [lo, hi] = std::minmax_element(t.values().begin(), t.values().end());
  const double a = *lo;
  const double range = *hi - *lo;
  for (double& v : t.values()) v = range > 0.0 ? (v - a) / range : 0.0;
}

double smoothstep(double x) { return x * x * (3.0 - 2.0 * x); }

}  // namespace

ImageTensor generate_depth(DepthKind kind, std::size_t height, std::size_t width,
                           std::uint64_t seed) {
  require(height >= 1 && width >= 1, ErrorCode::kInvalidArgument, "depth size must be >= 1");
  ImageTensor d(height, width, 1);
  switch (kind) {
    case DepthKind::kLinearRamp:
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) d.at(y, x, 0) = static_cast<double>(x + y);
      }
      break;
    case DepthKind::kRadial: {
      const double cy = (static_cast<double>(height) - 1.0) / 2.0;
      const double cx = (static_cast<double>(width) - 1.0) / 2.0;
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) d.at(y, x, 0) = std::hypot(y - cy, x - cx);
      }
      break;
    }
    case DepthKind::kValueNoise: {
      // Random lattice (4 cells across the longer side), smoothstep-bilinear.
      Rng rng(derive_seed(seed, "depth/value-noise"));
      const std::size_t cells = 4;
      ImageTensor lattice(cells + 1, cells + 1, 1);
      for (double& v : lattice.values()) v = rng.uniform();
      for (std::size_t y = 0; y < height; ++y) {
        const double fy = height > 1 ? static_cast<double>(y) * cells / (height - 1.0) : 0.0;
        const std::size_t iy = std::min<std::size_t>(static_cast<std::size_t>(fy), cells - 1);
        const double ty = smoothstep(fy - iy);
        for (std::size_t x = 0; x < width; ++x) {
          const double fx = width > 1 ? static_cast<double>(x) * cells / (width - 1.0) : 0.0;
          const std::size_t ix = std::min<std::size_t>(static_cast<std::size_t>(fx), cells - 1);
          const double tx = smoothstep(fx - ix);
          const double top = lattice.at(iy, ix, 0) * (1 - tx) + lattice.at(iy, ix + 1, 0) * tx;
          const double bot = lattice.at(iy + 1, ix, 0) * (1 - tx) + lattice.at(iy + 1, ix + 1, 0) * tx;
          d.at(y, x, 0) = top * (1 - ty) + bot * ty;
        }
      }
      break;
    }
  }
  normalize_minmax(d);
  return d;
}

ImageTensor synthesize_transmission(const ImageTensor& depth, double beta) {
  if (!(beta >= 0.0)) fail(ErrorCode::kInvalidArgument, "scattering coefficient must be >= 0");
  require(depth.channels() == 1, ErrorCode::kInvalidArgument, "depth must be single-channel");
  ImageTensor t = depth;
  for (double& v : t.values()) v = std::exp(-beta * v);
  return t;
}

ImageTensor compose_asm(const ImageTensor& clean, const ImageTensor& transmission, const Rgb& light) {
  if (clean.height() != transmission.height() || clean.width() != transmission.width() ||
      transmission.channels() != 1 || clean.channels() != 3) {
    fail(ErrorCode::kShapeMismatch, "apply_asm: clean image and transmission are not aligned");
  }
  ImageTensor out(clean.height(), clean.width(), 3);
  for (std::size_t p = 0; p < clean.pixels(); ++p) {
    const double t = transmission[p];
    for (std::size_t k = 0; k < 3; ++k) out[p * 3 + k] = clean[p * 3 + k] * t + light[k] * (1.0 - t);
  }
  return out;
}

ImageTensor apply_asm(const ImageTensor& clean, const ImageTensor& transmission, const Rgb& light) {
  return clamp01(compose_asm(clean, transmission, light));
}

HazeParams sample_haze_params(std::uint64_t seed, const HazeRanges& ranges) {
  for (std::size_t k = 0; k < 3; ++k) {
    if (!(ranges.light_min[k] <= ranges.light_max[k]) || ranges.light_min[k] < 0.0 ||
        ranges.light_max[k] > 1.0) {
      fail(ErrorCode::kInvalidArgument, "atmospheric light range must be a non-empty subset of [0,1]");
    }
  }
  if (!(ranges.beta_min <= ranges.beta_max) || ranges.beta_min < 0.0) {
    fail(ErrorCode::kInvalidArgument, "beta range must be non-empty and non-negative");
  }
  require(!ranges.depth_kinds.empty(), ErrorCode::kInvalidArgument, "no depth kinds configured");

  Rng rng(seed);
  HazeParams p;
  auto draw = [&rng](double lo, double hi) { return lo == hi ? lo : rng.uniform(lo, hi); };
  for (std::size_t k = 0; k < 3; ++k) p.atmospheric_light[k] = draw(ranges.light_min[k], ranges.light_max[k]);
  p.beta = draw(ranges.beta_min, ranges.beta_max);
  p.depth_kind = ranges.depth_kinds[rng.index(ranges.depth_kinds.size())];
  p.seed = derive_seed(seed, "haze/depth");
  return p;
}

ImageTensor synthesize_hazy(const ImageTensor& clean, const HazeParams& params) {
  const ImageTensor depth = generate_depth(params.depth_kind, clean.height(), clean.width(), params.seed);
  return apply_asm(clean, synthesize_transmission(depth, params.beta), params.atmospheric_light);
}

}  // namespace prodehaze
