#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace prodehaze {

// H x W x C raster of doubles, row-major with interleaved channels. Used for
// images (nominally [0,1]), latent features, and small weight matrices
// (a K x N matrix is stored as a K x 1 x N tensor or any shape with the same
// row-major layout).
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
              std::vector<double> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t pixels() const noexcept { return height_ * width_; }
  bool empty() const noexcept { return data_.empty(); }

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * width_ + x) * channels_ + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * width_ + x) * channels_ + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* pixel(std::size_t y, std::size_t x) { return data_.data() + (y * width_ + x) * channels_; }
  const double* pixel(std::size_t y, std::size_t x) const {
    return data_.data() + (y * width_ + x) * channels_;
  }

  std::span<double> values() & noexcept { return data_; }
  std::span<const double> values() const& noexcept { return data_; }
  // Safe in range-for over a temporary.
  std::vector<double> values() && noexcept { return std::move(data_); }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool same_shape(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool all_finite() const noexcept;

  void fill(double v);

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

// Mean over factor x factor blocks. Throws kInvalidArgument unless factor >= 1
// divides both spatial dimensions.
ImageTensor avg_pool(const ImageTensor& img, std::size_t factor);

// Nearest-neighbour enlargement by an integer factor.
ImageTensor upsample_nearest(const ImageTensor& img, std::size_t factor);

// Channel slice [begin, end).
ImageTensor slice_channels(const ImageTensor& img, std::size_t begin, std::size_t end);
ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b);

ImageTensor clamp01(ImageTensor img);

double mean(const ImageTensor& img);

}  // namespace prodehaze
