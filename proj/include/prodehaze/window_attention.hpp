#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prodehaze/image_tensor.hpp"
#include "prodehaze/nn/graph.hpp"
#include "prodehaze/nn/params.hpp"

namespace prodehaze {

// Non-overlapping tiling of an H x W x D feature map. Windows are stored in
// row-major window order, each as an N x 1 x D token matrix with row-major
// tokens (N = win_h * win_w).
struct WindowGrid {
  std::vector<ImageTensor> windows;
  std::size_t height = 0, width = 0, channels = 0;
  std::size_t win_h = 0, win_w = 0;
};

WindowGrid window_partition(const ImageTensor& feature, std::size_t win_h, std::size_t win_w);
ImageTensor window_merge(const WindowGrid& grid);

struct AttentionResult {
  ImageTensor output;   // N x 1 x d
  ImageTensor weights;  // N x N x 1 row-softmax probabilities
};

// softmax((Q K^T) (.) M / sqrt(scale_count)) V with Q, K, V as N x 1 x d and
// M as N x N x 1. A -inf mask entry forces its logit to -inf whatever the
// sign of the score; a row with no finite logit yields a zero output row.
// scale_count <= 0 selects N.
AttentionResult modulated_attention(const ImageTensor& q, const ImageTensor& k, const ImageTensor& v,
                                    const ImageTensor& mask, double scale_count = 0.0);

struct AttentionGrads {
  ImageTensor dq, dk, dv, dmask;  // dmask is zero on -inf entries
};

AttentionGrads modulated_attention_backward(const ImageTensor& q, const ImageTensor& k, const ImageTensor& v,
                                            const ImageTensor& mask, const ImageTensor& weights,
                                            const ImageTensor& d_out, double scale_count = 0.0);

// Adds one block's parameters under `prefix`: q/k/v/o projections (D x D,
// output bias), two layer norms, and a D -> 4D -> D GELU MLP. The attention
// output projection and the last MLP layer start at zero, so a fresh block
// is the identity.
void add_wst_params(nn::ParamSet& params, const std::string& prefix, std::size_t dim, std::uint64_t seed);

// Pre-norm residual block over an H x W x D map with windowed modulated
// attention: x + Attn(LN(x)), then + MLP(LN(.)). `masks` is (windows x N x N).
nn::Var wst_block(nn::Graph& g, nn::Var x, nn::Var masks, const nn::Bound& params, const std::string& prefix,
                  std::size_t win_h, std::size_t win_w, double scale_count);

// Single-window convenience: tokens N x 1 x D, mask N x N x 1, parameters
// under an empty prefix.
ImageTensor wst_block(const ImageTensor& tokens, const ImageTensor& mask, const nn::ParamSet& params);

}  // namespace prodehaze
