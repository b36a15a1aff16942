#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "prodehaze/image_tensor.hpp"

namespace prodehaze {

using Rgb = std::array<double, 3>;

enum class DepthKind { kLinearRamp, kRadial, kValueNoise };

std::string_view to_string(DepthKind kind);
DepthKind depth_kind_from_string(std::string_view name);

struct HazeParams {
  Rgb atmospheric_light{1.0, 1.0, 1.0};
  double beta = 1.0;
  DepthKind depth_kind = DepthKind::kLinearRamp;
  std::uint64_t seed = 0;

  friend bool operator==(const HazeParams&, const HazeParams&) = default;
};

nlohmann::json to_json(const HazeParams& p);
HazeParams haze_params_from_json(const nlohmann::json& j);

// Sampling ranges; each interval is closed and may be degenerate.
struct HazeRanges {
  Rgb light_min{0.7, 0.7, 0.7};
  Rgb light_max{1.0, 1.0, 1.0};
  double beta_min = 0.5;
  double beta_max = 1.5;
  std::vector<DepthKind> depth_kinds{DepthKind::kLinearRamp, DepthKind::kRadial,
                                     DepthKind::kValueNoise};
};

// Single-channel depth in [0,1], min-max normalised (a constant field maps to 0).
ImageTensor generate_depth(DepthKind kind, std::size_t height, std::size_t width,
                           std::uint64_t seed);

// t = exp(-beta * d). Throws kInvalidArgument for beta < 0 or non-single-channel depth.
ImageTensor synthesize_transmission(const ImageTensor& depth, double beta);

// I = J t + A (1 - t) without clamping; affine in J for fixed t and A.
ImageTensor compose_asm(const ImageTensor& clean, const ImageTensor& transmission, const Rgb& light);
// compose_asm followed by clamping to [0,1].
ImageTensor apply_asm(const ImageTensor& clean, const ImageTensor& transmission, const Rgb& light);

// Uniform draws within the ranges; throws kInvalidArgument on an empty interval.
HazeParams sample_haze_params(std::uint64_t seed, const HazeRanges& ranges);

// Depth -> transmission -> ASM for one clean image.
ImageTensor synthesize_hazy(const ImageTensor& clean, const HazeParams& params);

}  // namespace prodehaze
