#include "prodehaze/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "prodehaze/error.hpp"
#include "prodehaze/haze_mask.hpp"
#include "prodehaze/kernels/kernels.hpp"
#include "prodehaze/structure_prompt.hpp"
#include "prodehaze/window_attention.hpp"

namespace prodehaze::nn {
namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void accumulate(ImageTensor& dst, const ImageTensor& src, double s = 1.0) {
  K().axpy(s, src.data(), dst.data(), src.size());
}

ImageTensor scalar(double v) { return ImageTensor(1, 1, 1, v); }

// Calls fn(tap, y_out, x_out_begin, count, y_in, x_in_begin) for every
// contiguous run of (output, input) pixel pairs of a stride-1 "same"
// convolution. Zero padding skips out-of-range taps; replicate padding maps
// them onto the nearest edge pixel (single-pixel runs at the borders).
template <typename Fn>
void for_each_conv_run(std::size_t h, std::size_t w, std::size_t ksize, Padding pad, Fn&& fn) {
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(ksize / 2);
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  const bool replicate = pad == Padding::kReplicate;
  for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(ksize); ++ky) {
    for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(ksize); ++kx) {
      const std::size_t tap = static_cast<std::size_t>(ky) * ksize + static_cast<std::size_t>(kx);
      const std::ptrdiff_t x0 = std::min(W, std::max<std::ptrdiff_t>(0, r - kx));
      const std::ptrdiff_t x1 = std::max(x0, std::min<std::ptrdiff_t>(W, W + r - kx));
      for (std::ptrdiff_t y = 0; y < H; ++y) {
        std::ptrdiff_t yy = y + ky - r;
        if (yy < 0 || yy >= H) {
          if (!replicate) continue;
          yy = std::clamp<std::ptrdiff_t>(yy, 0, H - 1);
        }
        const auto uy = static_cast<std::size_t>(y);
        const auto uyy = static_cast<std::size_t>(yy);
        if (x1 > x0) {
          fn(tap, uy, static_cast<std::size_t>(x0), static_cast<std::size_t>(x1 - x0), uyy,
             static_cast<std::size_t>(x0 + kx - r));
        }
        if (!replicate) continue;
        for (std::ptrdiff_t x = 0; x < x0; ++x) fn(tap, uy, static_cast<std::size_t>(x), 1, uyy, 0);
        for (std::ptrdiff_t x = x1; x < W; ++x) {
          fn(tap, uy, static_cast<std::size_t>(x), 1, uyy, static_cast<std::size_t>(W - 1));
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Graph& g, Var x, Var w, Var b, Padding pad) {
  const ImageTensor& xv = g.value(x);
  const ImageTensor& wv = g.value(w);
  const ImageTensor& bv = g.value(b);
  const std::size_t taps = wv.height();
  const std::size_t ksize = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(taps))));
  const std::size_t cin = wv.width(), cout = wv.channels();
  if (ksize * ksize != taps || ksize % 2 == 0 || xv.channels() != cin || bv.size() != cout) {
    fail(ErrorCode::kShapeMismatch, "conv2d: weights " + std::to_string(taps) + "x" + std::to_string(cin) + "x" +
                                        std::to_string(cout) + " incompatible with input channels " +
                                        std::to_string(xv.channels()));
  }
  const std::size_t h = xv.height(), wd = xv.width();
  ImageTensor out(h, wd, cout);
  for (std::size_t p = 0; p < out.pixels(); ++p) std::copy_n(bv.data(), cout, out.data() + p * cout);
  for_each_conv_run(h, wd, ksize, pad, [&](std::size_t tap, std::size_t y, std::size_t xo, std::size_t n,
                                      std::size_t yy, std::size_t xi) {
    K().gemm_nn(n, cout, cin, xv.pixel(yy, xi), cin, wv.data() + tap * cin * cout, cout, out.pixel(y, xo), cout);
  });
  return g.record(std::move(out), {x, w, b}, [x, w, b, ksize, cin, cout, pad](Graph& g, std::size_t self) {
    const ImageTensor& gy = g.grad(self);
    const ImageTensor& xv = g.value(x);
    const ImageTensor& wv = g.value(w);
    const std::size_t h = xv.height(), wd = xv.width();
    if (g.requires_grad(b)) {
      ImageTensor& gb = g.grad(b);
      for (std::size_t p = 0; p < gy.pixels(); ++p) K().axpy(1.0, gy.data() + p * cout, gb.data(), cout);
    }
    const bool need_x = g.requires_grad(x);
    const bool need_w = g.requires_grad(w);
    ImageTensor* gx = need_x ? &g.grad(x) : nullptr;
    ImageTensor* gw = need_w ? &g.grad(w) : nullptr;
    for_each_conv_run(h, wd, ksize, pad, [&](std::size_t tap, std::size_t y, std::size_t xo, std::size_t n,
                                        std::size_t yy, std::size_t xi) {
      const double* dy = gy.pixel(y, xo);
      if (gx) K().gemm_nt(n, cin, cout, dy, cout, wv.data() + tap * cin * cout, cout, gx->pixel(yy, xi), cin);
      if (gw) K().gemm_tn(cin, cout, n, xv.pixel(yy, xi), cin, dy, cout, gw->data() + tap * cin * cout, cout);
    });
  });
}

Var add(Graph& g, Var a, Var b) {
  require(g.value(a).same_shape(g.value(b)), ErrorCode::kShapeMismatch, "add: shape mismatch");
  ImageTensor out = g.value(a);
  accumulate(out, g.value(b));
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const ImageTensor& gy = g.grad(self);
    if (g.requires_grad(a)) accumulate(g.grad(a), gy);
    if (g.requires_grad(b)) accumulate(g.grad(b), gy);
  });
}

Var sub(Graph& g, Var a, Var b) {
  require(g.value(a).same_shape(g.value(b)), ErrorCode::kShapeMismatch, "sub: shape mismatch");
  ImageTensor out = g.value(a);
  accumulate(out, g.value(b), -1.0);
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const ImageTensor& gy = g.grad(self);
    if (g.requires_grad(a)) accumulate(g.grad(a), gy);
    if (g.requires_grad(b)) accumulate(g.grad(b), gy, -1.0);
  });
}

Var scale(Graph& g, Var a, double s) {
  ImageTensor out = g.value(a);
  for (double& v : out.values()) v *= s;
  return g.record(std::move(out), {a}, [a, s](Graph& g, std::size_t self) {
    accumulate(g.grad(a), g.grad(self), s);
  });
}

Var silu(Graph& g, Var x) {
  ImageTensor out = g.value(x);
  for (double& v : out.values()) v = v / (1.0 + std::exp(-v));
  return g.record(std::move(out), {x}, [x](Graph& g, std::size_t self) {
    const ImageTensor& gy = g.grad(self);
    const ImageTensor& xv = g.value(x);
    ImageTensor& gx = g.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-xv[i]));
      gx[i] += gy[i] * s * (1.0 + xv[i] * (1.0 - s));
    }
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Graph& g, Var x) {
  ImageTensor out = g.value(x);
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  return g.record(std::move(out), {x}, [x](Graph& g, std::size_t self) {
    const ImageTensor& gy = g.grad(self);
    const ImageTensor& xv = g.value(x);
    ImageTensor& gx = g.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      gx[i] += gy[i] * d;
    }
  });
}

Var concat(Graph& g, Var a, Var b) {
  ImageTensor out = concat_channels(g.value(a), g.value(b));
  const std::size_t ca = g.value(a).channels(), cb = g.value(b).channels();
  return g.record(std::move(out), {a, b}, [a, b, ca, cb](Graph& g, std::size_t self) {
    const ImageTensor& gy = g.grad(self);
    const std::size_t n = gy.pixels();
    if (g.requires_grad(a)) {
      ImageTensor& ga = g.grad(a);
      for (std::size_t p = 0; p < n; ++p) K().axpy(1.0, gy.data() + p * (ca + cb), ga.data() + p * ca, ca);
    }
    if (g.requires_grad(b)) {
      ImageTensor& gb = g.grad(b);
      for (std::size_t p = 0; p < n; ++p) K().axpy(1.0, gy.data() + p * (ca + cb) + ca, gb.data() + p * cb, cb);
    }
  });
}

Var upsample2(Graph& g, Var x) {
  ImageTensor out = upsample_nearest(g.value(x), 2);
  return g.record(std::move(out), {x}, [x](Graph& g, std::size_t self) {
    const ImageTensor& gy = g.grad(self);
    ImageTensor& gx = g.grad(x);
    const std::size_t c = gx.channels();
    for (std::size_t y = 0; y < gy.height(); ++y) {
      for (std::size_t xx = 0; xx < gy.width(); ++xx) K().axpy(1.0, gy.pixel(y, xx), gx.pixel(y / 2, xx / 2), c);
    }
  });
}

Var clamp01(Graph& g, Var x) {
  ImageTensor out = prodehaze::clamp01(g.value(x));
  return g.record(std::move(out), {x}, [x](Graph& g, std::size_t self) {
    const ImageTensor& gy = g.grad(self);
    const ImageTensor& xv = g.value(x);
    ImageTensor& gx = g.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > 0.0 && xv[i] < 1.0) gx[i] += gy[i];
    }
  });
}

Var layer_norm(Graph& g, Var x, Var gain, Var bias, double eps) {
  const ImageTensor& xv = g.value(x);
  const std::size_t c = xv.channels();
  require(g.value(gain).size() == c && g.value(bias).size() == c, ErrorCode::kShapeMismatch,
          "layer_norm: gain/bias size mismatch");
  ImageTensor xhat(xv.height(), xv.width(), c);
  std::vector<double> inv_std(xv.pixels());
  ImageTensor out(xv.height(), xv.width(), c);
  const ImageTensor& gv = g.value(gain);
  const ImageTensor& bv = g.value(bias);
  for (std::size_t p = 0; p < xv.pixels(); ++p) {
    const double* in = xv.data() + p * c;
    double mu = 0.0;
    for (std::size_t k = 0; k < c; ++k) mu += in[k];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t k = 0; k < c; ++k) var += (in[k] - mu) * (in[k] - mu);
    var /= static_cast<double>(c);
    inv_std[p] = 1.0 / std::sqrt(var + eps);
    for (std::size_t k = 0; k < c; ++k) {
      xhat[p * c + k] = (in[k] - mu) * inv_std[p];
      out[p * c + k] = gv[k] * xhat[p * c + k] + bv[k];
    }
  }
  return g.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
    const ImageTensor& gy = g.grad(self);
    const std::size_t c = xhat.channels();
    const ImageTensor& gv = g.value(gain);
    if (g.requires_grad(gain)) {
      ImageTensor& gg = g.grad(gain);
      for (std::size_t i = 0; i < gy.size(); ++i) gg[i % c] += gy[i] * xhat[i];
    }
    if (g.requires_grad(bias)) {
      ImageTensor& gb = g.grad(bias);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i % c] += gy[i];
    }
    if (g.requires_grad(x)) {
      ImageTensor& gx = g.grad(x);
      for (std::size_t p = 0; p < xhat.pixels(); ++p) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
          const double d = gy[p * c + k] * gv[k];
          m1 += d;
          m2 += d * xhat[p * c + k];
        }
        m1 /= static_cast<double>(c);
        m2 /= static_cast<double>(c);
        for (std::size_t k = 0; k < c; ++k) {
          const double d = gy[p * c + k] * gv[k];
          gx[p * c + k] += inv_std[p] * (d - m1 - xhat[p * c + k] * m2);
        }
      }
    }
  });
}

Var latent_encode(Graph& g, Var x, const LatentProjection& proj) {
  ImageTensor out = proj.encode(g.value(x));
  return g.record(std::move(out), {x}, [x, &proj](Graph& g, std::size_t self) {
    accumulate(g.grad(x), proj.decode(g.grad(self)));
  });
}

Var mean_abs_diff(Graph& g, Var a, Var b) {
  const ImageTensor& av = g.value(a);
  const ImageTensor& bv = g.value(b);
  require(av.same_shape(bv), ErrorCode::kShapeMismatch, "mean_abs_diff: shape mismatch");
  const double n = static_cast<double>(av.size());
  return g.record(scalar(K().sum_abs_diff(av.data(), bv.data(), av.size()) / n), {a, b},
                  [a, b, n](Graph& g, std::size_t self) {
    const double s = g.grad(self)[0] / n;
    const ImageTensor& av = g.value(a);
    const ImageTensor& bv = g.value(b);
    auto sign = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    if (g.requires_grad(a)) {
      ImageTensor& ga = g.grad(a);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += s * sign(av[i] - bv[i]);
    }
    if (g.requires_grad(b)) {
      ImageTensor& gb = g.grad(b);
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= s * sign(av[i] - bv[i]);
    }
  });
}

Var mean_sq_diff(Graph& g, Var a, Var b) {
  const ImageTensor& av = g.value(a);
  const ImageTensor& bv = g.value(b);
  require(av.same_shape(bv), ErrorCode::kShapeMismatch, "mean_sq_diff: shape mismatch");
  const double n = static_cast<double>(av.size());
  return g.record(scalar(K().sum_sq_diff(av.data(), bv.data(), av.size()) / n), {a, b},
                  [a, b, n](Graph& g, std::size_t self) {
    const double s = 2.0 * g.grad(self)[0] / n;
    const ImageTensor& av = g.value(a);
    const ImageTensor& bv = g.value(b);
    if (g.requires_grad(a)) {
      ImageTensor& ga = g.grad(a);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += s * (av[i] - bv[i]);
    }
    if (g.requires_grad(b)) {
      ImageTensor& gb = g.grad(b);
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= s * (av[i] - bv[i]);
    }
  });
}

Var window_masks(Graph& g, const ImageTensor& pooled_mask, Var wq, Var wk, std::size_t win_h,
                 std::size_t win_w, std::size_t k) {
  ImageTensor masks = build_window_masks(pooled_mask, win_h, win_w, g.value(wq).values(),
                                         g.value(wk).values(), k);
  return g.record(std::move(masks), {wq, wk}, [pooled_mask, wq, wk, win_h, win_w](Graph& g, std::size_t self) {
    const ImageTensor& gm = g.grad(self);
    const ImageTensor& masks = g.value(Var{self});
    const ImageTensor& q = g.value(wq);
    const ImageTensor& kk = g.value(wk);
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * kk[i];
    const std::size_t gw = pooled_mask.width() / win_w;
    const std::size_t n = win_h * win_w;
    std::vector<double> m(n);
    double ds = 0.0;
    for (std::size_t w = 0; w < masks.height(); ++w) {
      const std::size_t wy = w / gw, wx = w % gw;
      for (std::size_t t = 0; t < n; ++t) m[t] = pooled_mask.at(wy * win_h + t / win_w, wx * win_w + t % win_w, 0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double mv = masks.at(w, i, j);
          if (!std::isfinite(mv)) continue;
          const double raw = s * (m[i] * m[j]);
          if (raw > 0.0 && raw < 1.0) ds -= gm.at(w, i, j) * m[i] * m[j];
        }
      }
    }
    if (g.requires_grad(wq)) accumulate(g.grad(wq), kk, ds);
    if (g.requires_grad(wk)) accumulate(g.grad(wk), q, ds);
  });
}

namespace {

ImageTensor gather_window(const ImageTensor& fm, std::size_t wy, std::size_t wx, std::size_t win_h, std::size_t win_w) {
  const std::size_t d = fm.channels();
  ImageTensor t(win_h * win_w, 1, d);
  for (std::size_t ty = 0; ty < win_h; ++ty) {
    std::copy_n(fm.pixel(wy * win_h + ty, wx * win_w), win_w * d, t.data() + ty * win_w * d);
  }
  return t;
}

void scatter_add_window(ImageTensor& fm, const ImageTensor& t, std::size_t wy, std::size_t wx, std::size_t win_h,
                        std::size_t win_w) {
  const std::size_t d = fm.channels();
  for (std::size_t ty = 0; ty < win_h; ++ty) {
    K().axpy(1.0, t.data() + ty * win_w * d, fm.pixel(wy * win_h + ty, wx * win_w), win_w * d);
  }
}

ImageTensor mask_of(const ImageTensor& masks, std::size_t w) {
  const std::size_t n = masks.width();
  ImageTensor m(n, n, 1);
  std::copy_n(masks.data() + w * n * n, n * n, m.data());
  return m;
}

}  // namespace

Var window_attention(Graph& g, Var q, Var k, Var v, Var masks, std::size_t win_h, std::size_t win_w,
                     double scale_count) {
  const ImageTensor& qv = g.value(q);
  require(qv.same_shape(g.value(k)) && qv.same_shape(g.value(v)), ErrorCode::kShapeMismatch,
          "window_attention: q/k/v shape mismatch");
  if (qv.height() % win_h != 0 || qv.width() % win_w != 0) {
    fail(ErrorCode::kInvalidArgument, "window_attention: feature map not divisible by window");
  }
  const std::size_t gh = qv.height() / win_h, gw = qv.width() / win_w;
  const std::size_t n = win_h * win_w;
  const ImageTensor& mv = g.value(masks);
  require(mv.height() == gh * gw && mv.width() == n && mv.channels() == n, ErrorCode::kShapeMismatch,
          "window_attention: mask stack does not match the window grid");

  ImageTensor out(qv.height(), qv.width(), qv.channels());
  std::vector<ImageTensor> weights(gh * gw);
  for (std::size_t wy = 0; wy < gh; ++wy) {
    for (std::size_t wx = 0; wx < gw; ++wx) {
      const std::size_t w = wy * gw + wx;
      AttentionResult r = modulated_attention(gather_window(qv, wy, wx, win_h, win_w),
                                              gather_window(g.value(k), wy, wx, win_h, win_w),
                                              gather_window(g.value(v), wy, wx, win_h, win_w), mask_of(mv, w),
                                              scale_count);
      scatter_add_window(out, r.output, wy, wx, win_h, win_w);
      weights[w] = std::move(r.weights);
    }
  }
  return g.record(std::move(out), {q, k, v, masks},
                  [q, k, v, masks, win_h, win_w, gh, gw, scale_count, weights = std::move(weights)](Graph& g, std::size_t self) {
    const ImageTensor& gy = g.grad(self);
    const ImageTensor& mv = g.value(masks);
    for (std::size_t wy = 0; wy < gh; ++wy) {
      for (std::size_t wx = 0; wx < gw; ++wx) {
        const std::size_t w = wy * gw + wx;
        AttentionGrads d = modulated_attention_backward(
            gather_window(g.value(q), wy, wx, win_h, win_w), gather_window(g.value(k), wy, wx, win_h, win_w),
            gather_window(g.value(v), wy, wx, win_h, win_w), mask_of(mv, w), weights[w],
            gather_window(gy, wy, wx, win_h, win_w), scale_count);
        if (g.requires_grad(q)) scatter_add_window(g.grad(q), d.dq, wy, wx, win_h, win_w);
        if (g.requires_grad(k)) scatter_add_window(g.grad(k), d.dk, wy, wx, win_h, win_w);
        if (g.requires_grad(v)) scatter_add_window(g.grad(v), d.dv, wy, wx, win_h, win_w);
        if (g.requires_grad(masks)) {
          ImageTensor& gm = g.grad(masks);
          K().axpy(1.0, d.dmask.data(), gm.data() + w * d.dmask.size(), d.dmask.size());
        }
      }
    }
  });
}

}  // namespace prodehaze::nn
