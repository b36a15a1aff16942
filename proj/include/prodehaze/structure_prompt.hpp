#pragma once

#include <cstdint>

#include "prodehaze/image_tensor.hpp"

namespace prodehaze {

// Single-level orthonormal 2-D Haar bands, each (H/2) x (W/2) x C. For a 2x2
// block [[a, b], [c, d]]:
//   ll = (a + b + c + d) / 2     lh = (a + b - c - d) / 2
//   hl = (a - b + c - d) / 2     hh = (a - b - c + d) / 2
// lh is low-pass along x and high-pass along y (responds to horizontal edges).
struct HaarSubbands {
  ImageTensor ll, lh, hl, hh;
};

HaarSubbands haar_dwt(const ImageTensor& img);
ImageTensor inverse_haar(const HaarSubbands& bands);

// LH, HH, HL concatenated along channels in that order: (H/2) x (W/2) x 3C.
ImageTensor high_freq_bands(const ImageTensor& img);

// Point-wise fusion kernel: a (3C) x 1 x C tensor, row = input channel of the
// concatenated bands, column = output channel.
ImageTensor default_prompt_kernel(std::size_t channels);

struct StructuralPrompt {
  ImageTensor x_high;          // (H/2) x (W/2) x C
  ImageTensor kernel_weights;  // (3C) x 1 x C
};

// Applies a point-wise (1x1) channel mixing: out[p] = in[p] * weights.
ImageTensor pointwise_mix(const ImageTensor& in, const ImageTensor& weights);

StructuralPrompt extract_high_freq_prompt(const ImageTensor& img, const ImageTensor& kernel_weights);

inline constexpr std::size_t kLatentChannels = 4;
inline constexpr std::size_t kImageStride = 8;
inline constexpr std::size_t kPromptStride = 4;

// Space-to-depth by `stride` followed by a fixed projection with orthonormal
// rows onto kLatentChannels. Rows 0..2 are the per-colour block means
// (normalised), row 3 is a seeded random direction orthogonal to them, so
// decode (the transpose) reproduces block means exactly.
class LatentProjection {
 public:
  LatentProjection(std::size_t stride, std::size_t in_channels, std::uint64_t seed);

  std::size_t stride() const noexcept { return stride_; }
  std::size_t in_channels() const noexcept { return in_channels_; }
  // kLatentChannels x (stride * stride * in_channels), row-major.
  const ImageTensor& matrix() const noexcept { return matrix_; }

  ImageTensor encode(const ImageTensor& img) const;
  // Transpose of encode (the pseudo-inverse, since rows are orthonormal).
  ImageTensor decode(const ImageTensor& latent) const;

 private:
  std::size_t stride_;
  std::size_t in_channels_;
  ImageTensor matrix_;
};

// Toy stand-ins for the VAE encoder: stride 8 for images, stride 4 for the
// half-resolution prompt, so both land on the same latent grid.
const LatentProjection& image_encoder();
const LatentProjection& prompt_encoder();

ImageTensor encode_latent(const ImageTensor& img);
ImageTensor decode_latent(const ImageTensor& latent);
ImageTensor encode_prompt_latent(const ImageTensor& x_high);

// c_f = latent_in (+) latent_high along channels, input latent first.
ImageTensor build_condition(const ImageTensor& latent_in, const ImageTensor& latent_high);

}  // namespace prodehaze
