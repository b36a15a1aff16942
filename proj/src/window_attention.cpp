#include "prodehaze/window_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "prodehaze/error.hpp"
#include "prodehaze/kernels/kernels.hpp"
#include "prodehaze/nn/ops.hpp"
#include "prodehaze/seed.hpp"

namespace prodehaze {

WindowGrid window_partition(const ImageTensor& feature, std::size_t win_h, std::size_t win_w) {
  if (win_h == 0 || win_w == 0 || feature.height() % win_h != 0 || feature.width() % win_w != 0) {
    fail(ErrorCode::kInvalidArgument, "window_partition: " + std::to_string(feature.height()) + "x" +
                                          std::to_string(feature.width()) + " not divisible by window " +
                                          std::to_string(win_h) + "x" + std::to_string(win_w));
  }
  WindowGrid grid{{}, feature.height(), feature.width(), feature.channels(), win_h, win_w};
  const std::size_t d = feature.channels();
  for (std::size_t wy = 0; wy < feature.height() / win_h; ++wy) {
    for (std::size_t wx = 0; wx < feature.width() / win_w; ++wx) {
      ImageTensor t(win_h * win_w, 1, d);
      for (std::size_t ty = 0; ty < win_h; ++ty) {
        std::copy_n(feature.pixel(wy * win_h + ty, wx * win_w), win_w * d, t.data() + ty * win_w * d);
      }
      grid.windows.push_back(std::move(t));
    }
  }
  return grid;
}

ImageTensor window_merge(const WindowGrid& grid) {
  const std::size_t gw = grid.width / grid.win_w;
  require(grid.windows.size() == (grid.height / grid.win_h) * gw, ErrorCode::kShapeMismatch,
          "window_merge: window count does not match the grid");
  ImageTensor out(grid.height, grid.width, grid.channels);
  const std::size_t d = grid.channels;
  for (std::size_t w = 0; w < grid.windows.size(); ++w) {
    const std::size_t wy = w / gw, wx = w % gw;
    for (std::size_t ty = 0; ty < grid.win_h; ++ty) {
      std::copy_n(grid.windows[w].data() + ty * grid.win_w * d, grid.win_w * d,
                  out.pixel(wy * grid.win_h + ty, wx * grid.win_w));
    }
  }
  return out;
}

namespace {

void check_attention_shapes(const ImageTensor& q, const ImageTensor& k, const ImageTensor& v,
                            const ImageTensor& mask) {
  const std::size_t n = q.height() * q.width();
  if (!q.same_shape(k) || k.height() * k.width() != v.height() * v.width() || mask.height() != n ||
      mask.width() != n || mask.channels() != 1) {
    fail(ErrorCode::kShapeMismatch, "modulated_attention: Q/K/V/M shapes are inconsistent");
  }
}

double scale_of(double scale_count, std::size_t n) {
  return 1.0 / std::sqrt(scale_count > 0.0 ? scale_count : static_cast<double>(n));
}

}  // namespace

AttentionResult modulated_attention(const ImageTensor& q, const ImageTensor& k, const ImageTensor& v,
                                    const ImageTensor& mask, double scale_count) {
  check_attention_shapes(q, k, v, mask);
  const auto& K = kernels::active();
  const std::size_t n = q.height() * q.width(), d = q.channels(), dv = v.channels();
  const double inv = scale_of(scale_count, n);

  ImageTensor scores(n, n, 1);
  K.gemm_nt(n, n, d, q.data(), d, k.data(), d, scores.data(), n);

  ImageTensor probs(n, n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      const double m = mask.at(i, j, 0);
      const double logit = std::isinf(m) && m < 0 ? -std::numeric_limits<double>::infinity() : scores.at(i, j, 0) * m * inv;
      probs.at(i, j, 0) = logit;
      row_max = std::max(row_max, logit);
    }
    if (!std::isfinite(row_max)) {  // fully masked row
      for (std::size_t j = 0; j < n; ++j) probs.at(i, j, 0) = 0.0;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double& p = probs.at(i, j, 0);
      p = std::isfinite(p) ? std::exp(p - row_max) : 0.0;
      total += p;
    }
    for (std::size_t j = 0; j < n; ++j) probs.at(i, j, 0) /= total;
  }

  ImageTensor out(n, 1, dv);
  K.gemm_nn(n, dv, n, probs.data(), n, v.data(), dv, out.data(), dv);
  return {std::move(out), std::move(probs)};
}

AttentionGrads modulated_attention_backward(const ImageTensor& q, const ImageTensor& k, const ImageTensor& v,
                                            const ImageTensor& mask, const ImageTensor& weights,
                                            const ImageTensor& d_out, double scale_count) {
  check_attention_shapes(q, k, v, mask);
  const auto& K = kernels::active();
  const std::size_t n = q.height() * q.width(), d = q.channels(), dv = v.channels();
  const double inv = scale_of(scale_count, n);

  AttentionGrads g{ImageTensor(n, 1, d), ImageTensor(n, 1, d), ImageTensor(n, 1, dv), ImageTensor(n, n, 1)};
  ImageTensor dp(n, n, 1);
  K.gemm_nt(n, n, dv, d_out.data(), dv, v.data(), dv, dp.data(), n);
  K.gemm_tn(n, dv, n, weights.data(), n, d_out.data(), dv, g.dv.data(), dv);

  ImageTensor scores(n, n, 1);
  K.gemm_nt(n, n, d, q.data(), d, k.data(), d, scores.data(), n);

  ImageTensor ds(n, n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = weights.data() + i * n;
    const double row_dot = K.dot(p, dp.data() + i * n, n);
    for (std::size_t j = 0; j < n; ++j) {
      const double m = mask.at(i, j, 0);
      if (std::isinf(m) && m < 0) continue;
      const double dlogit = p[j] * (dp.at(i, j, 0) - row_dot);
      ds.at(i, j, 0) = dlogit * m * inv;
      g.dmask.at(i, j, 0) = dlogit * scores.at(i, j, 0) * inv;
    }
  }
  K.gemm_nn(n, d, n, ds.data(), n, k.data(), d, g.dq.data(), d);
  K.gemm_tn(n, d, n, ds.data(), n, q.data(), d, g.dk.data(), d);
  return g;
}

void add_wst_params(nn::ParamSet& params, const std::string& prefix, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  params.add(prefix + "wq", rng.normal_tensor(1, dim, dim, s));
  params.add(prefix + "wk", rng.normal_tensor(1, dim, dim, s));
  params.add(prefix + "wv", rng.normal_tensor(1, dim, dim, s));
  params.add(prefix + "wo", ImageTensor(1, dim, dim));
  params.add(prefix + "bo", ImageTensor(1, 1, dim));
  params.add(prefix + "ln1_g", ImageTensor(1, 1, dim, 1.0));
  params.add(prefix + "ln1_b", ImageTensor(1, 1, dim));
  params.add(prefix + "ln2_g", ImageTensor(1, 1, dim, 1.0));
  params.add(prefix + "ln2_b", ImageTensor(1, 1, dim));
  params.add(prefix + "mlp_w1", rng.normal_tensor(1, dim, 4 * dim, s));
  params.add(prefix + "mlp_b1", ImageTensor(1, 1, 4 * dim));
  params.add(prefix + "mlp_w2", ImageTensor(1, 4 * dim, dim));
  params.add(prefix + "mlp_b2", ImageTensor(1, 1, dim));
}

nn::Var wst_block(nn::Graph& g, nn::Var x, nn::Var masks, const nn::Bound& p, const std::string& prefix,
                  std::size_t win_h, std::size_t win_w, double scale_count) {
  const std::size_t dim = g.value(x).channels();
  const nn::Var no_bias = g.constant(ImageTensor(1, 1, dim));
  const nn::Var h = nn::layer_norm(g, x, p[prefix + "ln1_g"], p[prefix + "ln1_b"]);
  const nn::Var q = nn::conv2d(g, h, p[prefix + "wq"], no_bias);
  const nn::Var k = nn::conv2d(g, h, p[prefix + "wk"], no_bias);
  const nn::Var v = nn::conv2d(g, h, p[prefix + "wv"], no_bias);
  const nn::Var attn = nn::window_attention(g, q, k, v, masks, win_h, win_w, scale_count);
  const nn::Var x1 = nn::add(g, x, nn::conv2d(g, attn, p[prefix + "wo"], p[prefix + "bo"]));
  const nn::Var h2 = nn::layer_norm(g, x1, p[prefix + "ln2_g"], p[prefix + "ln2_b"]);
  const nn::Var mlp = nn::conv2d(g, nn::gelu(g, nn::conv2d(g, h2, p[prefix + "mlp_w1"], p[prefix + "mlp_b1"])),
                                 p[prefix + "mlp_w2"], p[prefix + "mlp_b2"]);
  return nn::add(g, x1, mlp);
}

ImageTensor wst_block(const ImageTensor& tokens, const ImageTensor& mask, const nn::ParamSet& params) {
  const std::size_t n = tokens.height() * tokens.width();
  require(mask.height() == n && mask.width() == n, ErrorCode::kShapeMismatch, "wst_block: mask is not N x N");
  nn::Graph g;
  const nn::Bound bound(g, params, nullptr);
  const nn::Var x = g.constant(ImageTensor(n, 1, tokens.channels(), std::vector<double>(tokens.values().begin(), tokens.values().end())));
  const nn::Var m = g.constant(ImageTensor(1, n, n, std::vector<double>(mask.values().begin(), mask.values().end())));
  const nn::Var y = wst_block(g, x, m, bound, "", n, 1, static_cast<double>(n));
  return g.value(y);
}

}  // namespace prodehaze
