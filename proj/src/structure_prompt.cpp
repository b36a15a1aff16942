#include "prodehaze/structure_prompt.hpp"

#include <cmath>
#include <string>

#include "prodehaze/error.hpp"
#include "prodehaze/kernels/kernels.hpp"
#include "prodehaze/seed.hpp"

namespace prodehaze {

HaarSubbands haar_dwt(const ImageTensor& img) {
  if (img.height() % 2 != 0 || img.width() % 2 != 0 || img.empty()) {
    fail(ErrorCode::kInvalidArgument, "haar_dwt: height and width must be even and non-zero");
  }
  const std::size_t h = img.height() / 2, w = img.width() / 2, c = img.channels();
  HaarSubbands b{ImageTensor(h, w, c), ImageTensor(h, w, c), ImageTensor(h, w, c), ImageTensor(h, w, c)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        const double a = img.at(2 * y, 2 * x, k);
        const double bb = img.at(2 * y, 2 * x + 1, k);
        const double cc = img.at(2 * y + 1, 2 * x, k);
        const double d = img.at(2 * y + 1, 2 * x + 1, k);
        b.ll.at(y, x, k) = 0.5 * (a + bb + cc + d);
        b.lh.at(y, x, k) = 0.5 * (a + bb - cc - d);
        b.hl.at(y, x, k) = 0.5 * (a - bb + cc - d);
        b.hh.at(y, x, k) = 0.5 * (a - bb - cc + d);
      }
    }
  }
  return b;
}

ImageTensor inverse_haar(const HaarSubbands& b) {
  require(b.ll.same_shape(b.lh) && b.ll.same_shape(b.hl) && b.ll.same_shape(b.hh),
          ErrorCode::kShapeMismatch, "inverse_haar: subband shapes differ");
  const std::size_t h = b.ll.height(), w = b.ll.width(), c = b.ll.channels();
  ImageTensor out(2 * h, 2 * w, c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        const double ll = b.ll.at(y, x, k), lh = b.lh.at(y, x, k);
        const double hl = b.hl.at(y, x, k), hh = b.hh.at(y, x, k);
        out.at(2 * y, 2 * x, k) = 0.5 * (ll + lh + hl + hh);
        out.at(2 * y, 2 * x + 1, k) = 0.5 * (ll + lh - hl - hh);
        out.at(2 * y + 1, 2 * x, k) = 0.5 * (ll - lh + hl - hh);
        out.at(2 * y + 1, 2 * x + 1, k) = 0.5 * (ll - lh - hl + hh);
      }
    }
  }
  return out;
}

ImageTensor high_freq_bands(const ImageTensor& img) {
  const HaarSubbands b = haar_dwt(img);
  return concat_channels(concat_channels(b.lh, b.hh), b.hl);
}

ImageTensor default_prompt_kernel(std::size_t channels) {
  ImageTensor k(3 * channels, 1, channels);
  for (std::size_t band = 0; band < 3; ++band) {
    for (std::size_t c = 0; c < channels; ++c) k.at(band * channels + c, 0, c) = 1.0 / 3.0;
  }
  return k;
}

ImageTensor pointwise_mix(const ImageTensor& in, const ImageTensor& weights) {
  const std::size_t cin = weights.height() * weights.width();
  const std::size_t cout = weights.channels();
  if (in.channels() != cin) {
    fail(ErrorCode::kShapeMismatch, "pointwise_mix: input has " + std::to_string(in.channels()) +
                                        " channels, kernel expects " + std::to_string(cin));
  }
  ImageTensor out(in.height(), in.width(), cout);
  kernels::active().gemm_nn(in.pixels(), cout, cin, in.data(), cin, weights.data(), cout,
                            out.data(), cout);
  return out;
}

StructuralPrompt extract_high_freq_prompt(const ImageTensor& img, const ImageTensor& kernel_weights) {
  const std::size_t c = img.channels();
  if (kernel_weights.height() * kernel_weights.width() != 3 * c || kernel_weights.channels() != c) {
    fail(ErrorCode::kShapeMismatch, "prompt kernel must be (3C) x C for C = " + std::to_string(c));
  }
  return {pointwise_mix(high_freq_bands(img), kernel_weights), kernel_weights};
}

LatentProjection::LatentProjection(std::size_t stride, std::size_t in_channels, std::uint64_t seed)
    : stride_(stride), in_channels_(in_channels) {
  require(in_channels < kLatentChannels, ErrorCode::kInvalidArgument,
          "latent projection needs more latent channels than input channels");
  const std::size_t dim = stride * stride * in_channels;
  matrix_ = ImageTensor(kLatentChannels, 1, dim);
  const double dc = 1.0 / static_cast<double>(stride);
  for (std::size_t c = 0; c < in_channels; ++c) {
    for (std::size_t p = 0; p < stride * stride; ++p) matrix_.at(c, 0, p * in_channels + c) = dc;
  }
  Rng rng(seed);
  for (std::size_t r = in_channels; r < kLatentChannels; ++r) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    for (std::size_t q = 0; q < r; ++q) {  // Gram-Schmidt against earlier rows
      double proj = 0.0;
      for (std::size_t i = 0; i < dim; ++i) proj += v[i] * matrix_.at(q, 0, i);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * matrix_.at(q, 0, i);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < dim; ++i) matrix_.at(r, 0, i) = v[i] / norm;
  }
}

ImageTensor LatentProjection::encode(const ImageTensor& img) const {
  if (img.height() % stride_ != 0 || img.width() % stride_ != 0 || img.empty()) {
    fail(ErrorCode::kInvalidArgument, "encode_latent: size " + std::to_string(img.height()) + "x" +
                                          std::to_string(img.width()) + " not divisible by " +
                                          std::to_string(stride_));
  }
  require(img.channels() == in_channels_, ErrorCode::kShapeMismatch,
          "encode_latent: unexpected channel count");
  const std::size_t h = img.height() / stride_, w = img.width() / stride_;
  const std::size_t row = stride_ * in_channels_;
  const auto& k = kernels::active();
  ImageTensor out(h, w, kLatentChannels);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double* dst = out.pixel(y, x);
      for (std::size_t r = 0; r < kLatentChannels; ++r) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < stride_; ++dy) {
          s += k.dot(img.pixel(y * stride_ + dy, x * stride_), matrix_.data() + r * matrix_.channels() + dy * row, row);
        }
        dst[r] = s;
      }
    }
  }
  return out;
}

ImageTensor LatentProjection::decode(const ImageTensor& latent) const {
  require(latent.channels() == kLatentChannels, ErrorCode::kShapeMismatch,
          "decode_latent: unexpected channel count");
  const std::size_t row = stride_ * in_channels_;
  const auto& k = kernels::active();
  ImageTensor out(latent.height() * stride_, latent.width() * stride_, in_channels_);
  for (std::size_t y = 0; y < latent.height(); ++y) {
    for (std::size_t x = 0; x < latent.width(); ++x) {
      const double* src = latent.pixel(y, x);
      for (std::size_t dy = 0; dy < stride_; ++dy) {
        double* dst = out.pixel(y * stride_ + dy, x * stride_);
        for (std::size_t r = 0; r < kLatentChannels; ++r) {
          k.axpy(src[r], matrix_.data() + r * matrix_.channels() + dy * row, dst, row);
        }
      }
    }
  }
  return out;
}

const LatentProjection& image_encoder() {
  static const LatentProjection enc(kImageStride, 3, 0x5eed0008ULL);
  return enc;
}

const LatentProjection& prompt_encoder() {
  static const LatentProjection enc(kPromptStride, 3, 0x5eed0004ULL);
  return enc;
}

ImageTensor encode_latent(const ImageTensor& img) { return image_encoder().encode(img); }
ImageTensor decode_latent(const ImageTensor& latent) { return image_encoder().decode(latent); }
ImageTensor encode_prompt_latent(const ImageTensor& x_high) { return prompt_encoder().encode(x_high); }

ImageTensor build_condition(const ImageTensor& latent_in, const ImageTensor& latent_high) {
  if (latent_in.height() != latent_high.height() || latent_in.width() != latent_high.width()) {
    fail(ErrorCode::kShapeMismatch, "build_condition: latent spatial sizes differ");
  }
  return concat_channels(latent_in, latent_high);
}

}  // namespace prodehaze
