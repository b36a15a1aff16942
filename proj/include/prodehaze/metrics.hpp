#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "prodehaze/image_tensor.hpp"

namespace prodehaze {

inline constexpr double kPsnrCap = 99.0;

// 10 log10(1 / MSE) over all channels, capped at kPsnrCap.
double psnr(const ImageTensor& a, const ImageTensor& b);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

// Y = 0.299 R + 0.587 G + 0.114 B (1-channel inputs pass through).
ImageTensor luma(const ImageTensor& img);

// Gaussian-window SSIM on luma, averaged over valid window positions.
// Throws kInvalidArgument when the image is smaller than the window.
double ssim(const ImageTensor& a, const ImageTensor& b);

using Lab = std::array<double, 3>;

// sRGB (D65, standard transfer curve) -> CIELAB.
Lab srgb_to_lab(double r, double g, double b);

// CIEDE2000 colour difference with kL = kC = kH = 1.
double delta_e2000(const Lab& x, const Lab& y);

// Mean per-pixel CIEDE2000 of two RGB images.
double ciede2000(const ImageTensor& a, const ImageTensor& b);

struct MetricRow {
  std::string name;
  double psnr_db = 0.0, ssim = 0.0, ciede2000 = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;  // sorted by name
  MetricRow mean;               // name "mean"; zeros when rows is empty
  std::vector<std::string> unmatched;
  std::size_t warnings = 0;
};

MetricRow evaluate_pair(const std::string& name, const ImageTensor& pred, const ImageTensor& gt);
MetricReport make_report(std::vector<MetricRow> rows, std::vector<std::string> unmatched = {});

// Pairs images by filename across the two directories; unmatched files are
// listed and counted as warnings.
MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir);

nlohmann::json to_json(const MetricReport& report);
std::string to_csv(const MetricReport& report);

// Image files (.png / .ppm) directly inside `dir`, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace prodehaze
