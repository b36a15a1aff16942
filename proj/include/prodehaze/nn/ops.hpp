#pragma once

#include <cstddef>

#include "prodehaze/nn/graph.hpp"

namespace prodehaze {
class LatentProjection;
}

namespace prodehaze::nn {

// Weight layouts:
//   conv2d   w: (k*k) x Cin x Cout (tap-major), b: 1 x 1 x Cout
//   linear   = conv2d with k = 1
// Stride 1, output size equals input size.
enum class Padding { kZero, kReplicate };
Var conv2d(Graph& g, Var x, Var w, Var b, Padding pad = Padding::kZero);

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var silu(Graph& g, Var x);
Var gelu(Graph& g, Var x);
Var concat(Graph& g, Var a, Var b);
Var upsample2(Graph& g, Var x);
Var clamp01(Graph& g, Var x);
// Per-pixel normalisation over channels with gain/bias (1 x 1 x C).
Var layer_norm(Graph& g, Var x, Var gain, Var bias, double eps = 1e-5);

// Fixed linear toy encoder (space-to-depth + projection); gradient is the transpose.
Var latent_encode(Graph& g, Var x, const LatentProjection& proj);

// Scalar losses (1 x 1 x 1).
Var mean_abs_diff(Graph& g, Var a, Var b);
Var mean_sq_diff(Graph& g, Var a, Var b);

// Sparse haze masks for every window of `pooled_mask` (constant H x W x 1),
// differentiable in the 1 x 1 x N_l row vectors wq and wk.
Var window_masks(Graph& g, const ImageTensor& pooled_mask, Var wq, Var wk, std::size_t win_h,
                 std::size_t win_w, std::size_t k);

// Windowed modulated attention over H x W x d feature maps q, k, v; masks is
// (windows x N x N). `scale_count` is the N_l in the 1/sqrt(N_l) logit scale.
Var window_attention(Graph& g, Var q, Var k, Var v, Var masks, std::size_t win_h,
                     std::size_t win_w, double scale_count);

}  // namespace prodehaze::nn
