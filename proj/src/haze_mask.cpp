#include "prodehaze/haze_mask.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "prodehaze/error.hpp"
#include "prodehaze/kernels/kernels.hpp"

namespace prodehaze {

DcpMask dark_channel(const ImageTensor& img, std::size_t patch_size) {
  if (patch_size == 0 || patch_size % 2 == 0) {
    fail(ErrorCode::kInvalidArgument, "dark_channel: patch size must be odd, got " + std::to_string(patch_size));
  }
  require(img.channels() == 3, ErrorCode::kInvalidArgument, "dark_channel: expected 3 channels");
  const std::size_t h = img.height(), w = img.width();
  const std::size_t r = patch_size / 2;
  const auto& k = kernels::active();

  // Channel minimum written into an edge-padded buffer; then separable
  // min filters (rows, then columns) which equal the square-patch minimum.
  const std::size_t pw = w + 2 * r;
  std::vector<double> padded(h * pw);
  for (std::size_t y = 0; y < h; ++y) {
    double* row = padded.data() + y * pw;
    for (std::size_t x = 0; x < w; ++x) {
      const double* p = img.pixel(y, x);
      row[x + r] = std::min(p[0], std::min(p[1], p[2]));
    }
    for (std::size_t i = 0; i < r; ++i) {
      row[i] = row[r];
      row[r + w + i] = row[r + w - 1];
    }
  }
  ImageTensor horiz(h, w, 1, std::numeric_limits<double>::infinity());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t d = 0; d < patch_size; ++d) {
      k.min_inplace(padded.data() + y * pw + d, horiz.data() + y * w, w);
    }
  }
  DcpMask out{ImageTensor(h, w, 1, std::numeric_limits<double>::infinity()), patch_size};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t d = 0; d < patch_size; ++d) {
      const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y + d) - static_cast<std::ptrdiff_t>(r), 0,
                                                           static_cast<std::ptrdiff_t>(h) - 1);
      k.min_inplace(horiz.data() + yy * w, out.values.data() + y * w, w);
    }
  }
  return out;
}

Rgb estimate_atmospheric_light(const ImageTensor& img, const DcpMask& dcp) {
  require(!img.empty() && img.channels() == 3, ErrorCode::kInvalidArgument,
          "estimate_atmospheric_light: expected a non-empty RGB image");
  require(dcp.values.height() == img.height() && dcp.values.width() == img.width(),
          ErrorCode::kShapeMismatch, "estimate_atmospheric_light: mask/image size mismatch");
  const std::size_t n = img.pixels();
  const std::size_t count = std::max<std::size_t>(1, n / 1000);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto intensity = [&img](std::size_t p) { return img[3 * p] + img[3 * p + 1] + img[3 * p + 2]; };
  std::partial_sort(order.begin(), order.begin() + count, order.end(), [&](std::size_t a, std::size_t b) {
    if (dcp.values[a] != dcp.values[b]) return dcp.values[a] > dcp.values[b];
    if (intensity(a) != intensity(b)) return intensity(a) > intensity(b);
    return a < b;
  });
  Rgb light{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t c = 0; c < 3; ++c) light[c] += img[3 * order[i] + c];
  }
  for (double& v : light) v /= static_cast<double>(count);
  return light;
}

ImageTensor dcp_dehaze_baseline(const ImageTensor& img, const DcpBaselineOptions& opts) {
  const DcpMask dcp = dark_channel(img, opts.patch_size);
  Rgb light = estimate_atmospheric_light(img, dcp);
  for (double& v : light) v = std::max(v, 1e-6);

  ImageTensor normalized = img;
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    for (std::size_t c = 0; c < 3; ++c) normalized[3 * p + c] /= light[c];
  }
  const DcpMask norm_dark = dark_channel(normalized, opts.patch_size);

  ImageTensor out(img.height(), img.width(), 3);
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    const double t = std::max(1.0 - opts.omega * norm_dark.values[p], opts.t_min);
    for (std::size_t c = 0; c < 3; ++c) {
      out[3 * p + c] = std::clamp((img[3 * p + c] - light[c]) / t + light[c], 0.0, 1.0);
    }
  }
  return out;
}

ImageTensor correlation_map_unclamped(std::span<const double> m, std::span<const double> wq,
                                      std::span<const double> wk) {
  if (wq.size() != wk.size() || wq.empty()) {
    fail(ErrorCode::kShapeMismatch, "correlation_map: wq and wk must have equal non-zero length");
  }
  double scale = 0.0;
  for (std::size_t i = 0; i < wq.size(); ++i) scale += wq[i] * wk[i];
  const std::size_t n = m.size();
  ImageTensor corr(n, n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) corr.at(i, j, 0) = scale * (m[i] * m[j]);
  }
  return corr;
}

ImageTensor correlation_map(std::span<const double> m, std::span<const double> wq,
                            std::span<const double> wk) {
  return clamp01(correlation_map_unclamped(m, wq, wk));
}

std::vector<IndexPair> topk_indices(const ImageTensor& corr, std::size_t k) {
  require(corr.height() == corr.width() && corr.channels() == 1, ErrorCode::kShapeMismatch,
          "topk_indices: expected an N x N matrix");
  const std::size_t n = corr.height();
  if (k > n * n) {
    fail(ErrorCode::kOutOfRange, "topk_indices: k = " + std::to_string(k) + " exceeds N^2 = " + std::to_string(n * n));
  }
  std::vector<std::size_t> order(n * n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&corr](std::size_t a, std::size_t b) {
    if (corr[a] != corr[b]) return corr[a] > corr[b];
    return a < b;
  });
  std::vector<IndexPair> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(order[i] / n, order[i] % n);
  return out;
}

ImageTensor build_sparse_mask(const ImageTensor& corr, std::span<const IndexPair> selected) {
  ImageTensor mask = corr;
  for (double& v : mask.values()) v = 1.0 - v;
  for (const auto& [i, j] : selected) {
    require(i < corr.height() && j < corr.width(), ErrorCode::kOutOfRange,
            "build_sparse_mask: index out of range");
    mask.at(i, j, 0) = -std::numeric_limits<double>::infinity();
  }
  return mask;
}

std::size_t default_topk(std::size_t tokens, double fraction) {
  const std::size_t total = tokens * tokens;
  const double k = std::ceil(fraction * static_cast<double>(total) - 1e-9);
  return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(total)));
}

std::vector<double> default_mask_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / std::sqrt(static_cast<double>(n)));
}

ImageTensor build_window_masks(const ImageTensor& pooled_mask, std::size_t win_h, std::size_t win_w,
                               std::span<const double> wq, std::span<const double> wk,
                               std::size_t k) {
  require(pooled_mask.channels() == 1, ErrorCode::kInvalidArgument, "window masks need a 1-channel mask");
  if (win_h == 0 || win_w == 0 || pooled_mask.height() % win_h != 0 || pooled_mask.width() % win_w != 0) {
    fail(ErrorCode::kInvalidArgument, "mask resolution " + std::to_string(pooled_mask.height()) + "x" +
                                          std::to_string(pooled_mask.width()) + " not divisible by window " +
                                          std::to_string(win_h) + "x" + std::to_string(win_w));
  }
  const std::size_t gh = pooled_mask.height() / win_h, gw = pooled_mask.width() / win_w;
  const std::size_t n = win_h * win_w;
  ImageTensor out(gh * gw, n, n);
  std::vector<double> m(n);
  ImageTensor ranking(n, n, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < wq.size() && i < wk.size(); ++i) s += wq[i] * wk[i];
  const double sign = s > 0.0 ? 1.0 : s < 0.0 ? -1.0 : 0.0;
  for (std::size_t wy = 0; wy < gh; ++wy) {
    for (std::size_t wx = 0; wx < gw; ++wx) {
      for (std::size_t ty = 0; ty < win_h; ++ty) {
        for (std::size_t tx = 0; tx < win_w; ++tx) m[ty * win_w + tx] = pooled_mask.at(wy * win_h + ty, wx * win_w + tx, 0);
      }
      // Rank by the pre-clamp map: sign(wq . wk) m_i m_j orders exactly like
      // (wq . wk) m m^T for any positive rescaling of wq or wk.
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) ranking[i * n + j] = sign * (m[i] * m[j]);
      const ImageTensor sparse = build_sparse_mask(correlation_map(m, wq, wk), topk_indices(ranking, k));
      std::copy(sparse.values().begin(), sparse.values().end(), out.data() + (wy * gw + wx) * n * n);
    }
  }
  return out;
}

}  // namespace prodehaze
