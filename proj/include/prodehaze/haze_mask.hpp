#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "prodehaze/haze_synthesis.hpp"
#include "prodehaze/image_tensor.hpp"

namespace prodehaze {

inline constexpr std::size_t kDefaultDcpPatch = 15;
inline constexpr double kDefaultKFraction = 0.25;

struct DcpMask {
  ImageTensor values;  // H x W x 1, in [0,1] for images in [0,1]
  std::size_t patch_size = 1;
};

// min over the patch (edge-replicated borders) of the min over channels.
// Bright values mark dense haze. Throws kInvalidArgument for an even patch or
// a non-3-channel image.
DcpMask dark_channel(const ImageTensor& img, std::size_t patch_size = kDefaultDcpPatch);

// Mean colour of the brightest-dark-channel 0.1% of pixels (at least one).
// Ties on the dark channel are broken by pixel intensity, then raster order.
Rgb estimate_atmospheric_light(const ImageTensor& img, const DcpMask& dcp);

struct DcpBaselineOptions {
  std::size_t patch_size = kDefaultDcpPatch;
  double omega = 0.95;
  double t_min = 0.1;
};

// Classical dark-channel-prior dehazer (no transmission refinement).
ImageTensor dcp_dehaze_baseline(const ImageTensor& img, const DcpBaselineOptions& opts = {});

using IndexPair = std::pair<std::size_t, std::size_t>;

// N x N x 1 tensor (row i, column j at (i, j, 0)) equal to (wq . wk) m m^T,
// before and after clamping to [0,1].
ImageTensor correlation_map_unclamped(std::span<const double> m, std::span<const double> wq,
                                      std::span<const double> wk);
ImageTensor correlation_map(std::span<const double> m, std::span<const double> wq,
                            std::span<const double> wk);

// The k largest entries; equal values resolve to the smaller row-major index.
// Returned in descending-rank order.
std::vector<IndexPair> topk_indices(const ImageTensor& corr, std::size_t k);

// -inf on the selected pairs, 1 - corr elsewhere.
ImageTensor build_sparse_mask(const ImageTensor& corr, std::span<const IndexPair> selected);

// ceil(fraction * N^2), clamped to [0, N^2].
std::size_t default_topk(std::size_t tokens, double fraction = kDefaultKFraction);

// wq = wk = 1/sqrt(n) everywhere.
std::vector<double> default_mask_weights(std::size_t n);

// Full per-window pipeline over a (pooled) single-channel mask: windows are
// tiled row-major, each flattened row-major into m, then correlation ->
// top-k -> sparse mask. Top-k ranks the pre-clamp correlation, so clamped
// ties resolve by correlation strength and the selection is invariant to
// positive rescaling of wq or wk. Returns a (windows x N x N) tensor; window w, entry
// (i, j) is at (w, i, j).
ImageTensor build_window_masks(const ImageTensor& pooled_mask, std::size_t win_h, std::size_t win_w,
                               std::span<const double> wq, std::span<const double> wk,
                               std::size_t k);

}  // namespace prodehaze
