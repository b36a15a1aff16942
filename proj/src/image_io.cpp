#include "prodehaze/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "prodehaze/error.hpp"

namespace prodehaze {
namespace {

namespace fs = std::filesystem;

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    fail(ErrorCode::kMissingFile, "no such image file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingFile, "cannot open image file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageTensor from_bytes(const unsigned char* rgb, std::size_t h, std::size_t w) {
  ImageTensor out(h, w, 3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rgb[i] / 255.0;
  return out;
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

ImageTensor load_png(const std::vector<unsigned char>& bytes, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorCode::kCorruptHeader, "bad PNG header in " + path.string() + ": " + msg);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    fail(ErrorCode::kUnsupportedFormat, "16-bit PNG not supported: " + path.string());
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorCode::kCorruptPayload, "bad PNG data in " + path.string() + ": " + msg);
  }
  return from_bytes(rgb.data(), image.height, image.width);
}

// Parses the next whitespace/comment separated integer of a PNM header.
bool next_header_int(const std::vector<unsigned char>& b, std::size_t& pos, long& value) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) return false;
  value = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    value = value * 10 + (b[pos] - '0');
    if (value > (1L << 24)) return false;
    ++pos;
  }
  return true;
}

ImageTensor load_ppm(const std::vector<unsigned char>& b, const fs::path& path) {
  if (b[1] != '6') fail(ErrorCode::kUnsupportedFormat, "only binary PPM (P6) is supported: " + path.string());
  std::size_t pos = 2;
  long w = 0, h = 0, maxval = 0;
  if (!next_header_int(b, pos, w) || !next_header_int(b, pos, h) ||
      !next_header_int(b, pos, maxval) || w <= 0 || h <= 0 || pos >= b.size() ||
      !std::isspace(b[pos])) {
    fail(ErrorCode::kCorruptHeader, "malformed PPM header: " + path.string());
  }
  if (maxval != 255) fail(ErrorCode::kUnsupportedFormat, "PPM maxval must be 255: " + path.string());
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (b.size() - pos < need) {
    fail(ErrorCode::kCorruptPayload, "truncated PPM payload: " + path.string());
  }
  return from_bytes(b.data() + pos, static_cast<std::size_t>(h), static_cast<std::size_t>(w));
}

bool has_extension(const fs::path& path, const char* ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

}  // namespace

ImageTensor load_image(const fs::path& path) {
  const std::vector<unsigned char> bytes = read_bytes(path);
  static const unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) {
    return load_png(bytes, path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] >= '1' && bytes[1] <= '7') {
    return load_ppm(bytes, path);
  }
  fail(ErrorCode::kUnsupportedFormat, "not a PNG or PPM file: " + path.string());
}

void save_image(const ImageTensor& img, const fs::path& path) {
  const std::size_t c = img.channels();
  if (c != 1 && c != 3) {
    fail(ErrorCode::kInvalidArgument,
         "save_image: expected 1 or 3 channels, got " + std::to_string(c));
  }
  require(!img.empty(), ErrorCode::kInvalidArgument, "save_image: empty image");

  if (has_extension(path, ".ppm")) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::kUnwritablePath, "cannot write " + path.string());
    out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
    std::vector<unsigned char> rgb(img.pixels() * 3);
    for (std::size_t p = 0; p < img.pixels(); ++p) {
      for (std::size_t k = 0; k < 3; ++k) rgb[p * 3 + k] = quantize(img[p * c + (c == 1 ? 0 : k)]);
    }
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) fail(ErrorCode::kUnwritablePath, "write failed: " + path.string());
    return;
  }
  if (!has_extension(path, ".png")) {
    fail(ErrorCode::kUnsupportedFormat, "output must be .png or .ppm: " + path.string());
  }

  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = quantize(img[i]);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, bytes.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, std::string("PNG encode failed: ") + image.message);
  }
  std::vector<unsigned char> encoded(size);
  if (!png_image_write_to_memory(&image, encoded.data(), &size, 0, bytes.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, std::string("PNG encode failed: ") + image.message);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kUnwritablePath, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(encoded.data()), static_cast<std::streamsize>(size));
  if (!out) fail(ErrorCode::kUnwritablePath, "write failed: " + path.string());
}

ImageTensor normalize_for_display(const ImageTensor& img) {
  ImageTensor out = img;
  if (img.empty()) return out;
  const auto [lo, hi] = std::minmax_element(img.values().begin(), img.values().end());
  const double range = *hi - *lo;
  for (double& v : out.values()) v = range > 0.0 ? (v - *lo) / range : 0.0;
  return out;
}

}  // namespace prodehaze
