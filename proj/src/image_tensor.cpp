#include "prodehaze/image_tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prodehaze/error.hpp"
#include "prodehaze/kernels/kernels.hpp"

namespace prodehaze {

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {}

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
                         std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != height * width * channels) {
    fail(ErrorCode::kShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                        " does not match " + std::to_string(height) + "x" +
                                        std::to_string(width) + "x" + std::to_string(channels));
  }
}

bool ImageTensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void ImageTensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

ImageTensor avg_pool(const ImageTensor& img, std::size_t factor) {
  if (factor == 0 || img.height() % factor != 0 || img.width() % factor != 0) {
    fail(ErrorCode::kInvalidArgument, "avg_pool: factor " + std::to_string(factor) +
                                          " does not divide " + std::to_string(img.height()) +
                                          "x" + std::to_string(img.width()));
  }
  if (factor == 1) return img;
  const std::size_t c = img.channels();
  ImageTensor out(img.height() / factor, img.width() / factor, c);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t oy = 0; oy < out.height(); ++oy) {
    for (std::size_t ox = 0; ox < out.width(); ++ox) {
      double* dst = out.pixel(oy, ox);
      for (std::size_t dy = 0; dy < factor; ++dy) {
        for (std::size_t dx = 0; dx < factor; ++dx) {
          const double* src = img.pixel(oy * factor + dy, ox * factor + dx);
          for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
        }
      }
      for (std::size_t k = 0; k < c; ++k) dst[k] *= inv;
    }
  }
  return out;
}

ImageTensor upsample_nearest(const ImageTensor& img, std::size_t factor) {
  require(factor >= 1, ErrorCode::kInvalidArgument, "upsample factor must be >= 1");
  const std::size_t c = img.channels();
  ImageTensor out(img.height() * factor, img.width() * factor, c);
  for (std::size_t y = 0; y < out.height(); ++y) {
    for (std::size_t x = 0; x < out.width(); ++x) {
      std::copy_n(img.pixel(y / factor, x / factor), c, out.pixel(y, x));
    }
  }
  return out;
}

ImageTensor slice_channels(const ImageTensor& img, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= img.channels(), ErrorCode::kOutOfRange,
          "channel slice out of range");
  ImageTensor out(img.height(), img.width(), end - begin);
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    std::copy_n(img.data() + p * img.channels() + begin, end - begin,
                out.data() + p * out.channels());
  }
  return out;
}

ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b) {
  require(a.height() == b.height() && a.width() == b.width(), ErrorCode::kShapeMismatch,
          "concat_channels: spatial sizes differ");
  const std::size_t ca = a.channels();
  const std::size_t cb = b.channels();
  ImageTensor out(a.height(), a.width(), ca + cb);
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    std::copy_n(a.data() + p * ca, ca, out.data() + p * (ca + cb));
    std::copy_n(b.data() + p * cb, cb, out.data() + p * (ca + cb) + ca);
  }
  return out;
}

ImageTensor clamp01(ImageTensor img) {
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

double mean(const ImageTensor& img) {
  if (img.empty()) return 0.0;
  return kernels::active().sum(img.data(), img.size()) / static_cast<double>(img.size());
}

}  // namespace prodehaze
