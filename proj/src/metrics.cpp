#include "prodehaze/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "prodehaze/error.hpp"
#include "prodehaze/image_io.hpp"
#include "prodehaze/kernels/kernels.hpp"

namespace prodehaze {

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require(a.same_shape(b), ErrorCode::kShapeMismatch, "psnr: image shapes differ");
  require(a.size() > 0, ErrorCode::kInvalidArgument, "psnr: empty images");
  const double mse = kernels::active().sum_sq_diff(a.data(), b.data(), a.size()) / static_cast<double>(a.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

ImageTensor luma(const ImageTensor& img) {
  if (img.channels() == 1) return img;
  require(img.channels() == 3, ErrorCode::kInvalidArgument, "luma: expected 1 or 3 channels");
  ImageTensor y(img.height(), img.width(), 1);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double* p = img.data() + 3 * i;
    y[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return y;
}

namespace {

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  const double r = static_cast<double>(kSsimWindow / 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - r;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Valid-mode separable filtering.
ImageTensor filter_valid(const ImageTensor& x, const std::array<double, kSsimWindow>& w) {
  const std::size_t oh = x.height() - kSsimWindow + 1, ow = x.width() - kSsimWindow + 1;
  ImageTensor rows(x.height(), ow, 1);
  for (std::size_t y = 0; y < x.height(); ++y)
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double s = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) s += w[k] * x.at(y, ox + k, 0);
      rows.at(y, ox, 0) = s;
    }
  ImageTensor out(oh, ow, 1);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double s = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) s += w[k] * rows.at(oy + k, ox, 0);
      out.at(oy, ox, 0) = s;
    }
  return out;
}

ImageTensor product(const ImageTensor& a, const ImageTensor& b) {
  ImageTensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
  require(a.same_shape(b), ErrorCode::kShapeMismatch, "ssim: image shapes differ");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow) {
    fail(ErrorCode::kInvalidArgument, "ssim: image smaller than the 11x11 window");
  }
  const auto w = gaussian_window();
  const ImageTensor x = luma(a), y = luma(b);
  const ImageTensor mx = filter_valid(x, w), my = filter_valid(y, w);
  const ImageTensor exx = filter_valid(product(x, x), w), eyy = filter_valid(product(y, y), w);
  const ImageTensor exy = filter_valid(product(x, y), w);
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double ux = mx[i], uy = my[i];
    const double vx = exx[i] - ux * ux, vy = eyy[i] - uy * uy, cxy = exy[i] - ux * uy;
    const double num = (2.0 * ux * uy + c1) * (2.0 * cxy + c2);
    const double den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

namespace {

double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

Lab srgb_to_lab(double r, double g, double b) {
  const double lr = srgb_to_linear(r), lg = srgb_to_linear(g), lb = srgb_to_linear(b);
  const double x = 0.4124564 * lr + 0.3575761 * lg + 0.1804375 * lb;
  const double y = 0.2126729 * lr + 0.7151522 * lg + 0.0721750 * lb;
  const double z = 0.0193339 * lr + 0.1191920 * lg + 0.9503041 * lb;
  const double fx = lab_f(x / 0.95047), fy = lab_f(y / 1.0), fz = lab_f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double delta_e2000(const Lab& x, const Lab& y) {
  const double c1 = std::hypot(x[1], x[2]), c2 = std::hypot(y[1], y[2]);
  const double cbar = 0.5 * (c1 + c2);
  const double cbar7 = std::pow(cbar, 7.0);
  const double gfac = 0.5 * (1.0 - std::sqrt(cbar7 / (cbar7 + std::pow(25.0, 7.0))));
  const double a1 = (1.0 + gfac) * x[1], a2 = (1.0 + gfac) * y[1];
  const double cp1 = std::hypot(a1, x[2]), cp2 = std::hypot(a2, y[2]);
  auto hue = [](double b, double a) {
    if (a == 0.0 && b == 0.0) return 0.0;
    double h = std::atan2(b, a) / kDeg;
    return h < 0.0 ? h + 360.0 : h;
  };
  const double h1 = hue(x[2], a1), h2 = hue(y[2], a2);

  const double dl = y[0] - x[0];
  const double dc = cp2 - cp1;
  double dh = 0.0;
  if (cp1 * cp2 != 0.0) {
    dh = h2 - h1;
    if (dh > 180.0) dh -= 360.0;
    else if (dh < -180.0) dh += 360.0;
  }
  const double dH = 2.0 * std::sqrt(cp1 * cp2) * std::sin(0.5 * dh * kDeg);

  const double lbar = 0.5 * (x[0] + y[0]);
  const double cpbar = 0.5 * (cp1 + cp2);
  double hbar = h1 + h2;
  if (cp1 * cp2 != 0.0) {
    if (std::abs(h1 - h2) <= 180.0) hbar = 0.5 * (h1 + h2);
    else if (h1 + h2 < 360.0) hbar = 0.5 * (h1 + h2 + 360.0);
    else hbar = 0.5 * (h1 + h2 - 360.0);
  }
  const double t = 1.0 - 0.17 * std::cos((hbar - 30.0) * kDeg) + 0.24 * std::cos(2.0 * hbar * kDeg) +
                   0.32 * std::cos((3.0 * hbar + 6.0) * kDeg) - 0.20 * std::cos((4.0 * hbar - 63.0) * kDeg);
  const double dtheta = 30.0 * std::exp(-std::pow((hbar - 275.0) / 25.0, 2.0));
  const double cpbar7 = std::pow(cpbar, 7.0);
  const double rc = 2.0 * std::sqrt(cpbar7 / (cpbar7 + std::pow(25.0, 7.0)));
  const double l50 = (lbar - 50.0) * (lbar - 50.0);
  const double sl = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
  const double sc = 1.0 + 0.045 * cpbar;
  const double sh = 1.0 + 0.015 * cpbar * t;
  const double rt = -std::sin(2.0 * dtheta * kDeg) * rc;

  const double tl = dl / sl, tc = dc / sc, th = dH / sh;
  return std::sqrt(tl * tl + tc * tc + th * th + rt * tc * th);
}

double ciede2000(const ImageTensor& a, const ImageTensor& b) {
  require(a.same_shape(b), ErrorCode::kShapeMismatch, "ciede2000: image shapes differ");
  require(a.channels() == 3, ErrorCode::kInvalidArgument, "ciede2000: expected RGB images");
  require(a.pixels() > 0, ErrorCode::kInvalidArgument, "ciede2000: empty images");
  double total = 0.0;
  for (std::size_t i = 0; i < a.pixels(); ++i) {
    const double* p = a.data() + 3 * i;
    const double* q = b.data() + 3 * i;
    total += delta_e2000(srgb_to_lab(p[0], p[1], p[2]), srgb_to_lab(q[0], q[1], q[2]));
  }
  return total / static_cast<double>(a.pixels());
}

MetricRow evaluate_pair(const std::string& name, const ImageTensor& pred, const ImageTensor& gt) {
  return {name, psnr(pred, gt), ssim(pred, gt), ciede2000(pred, gt)};
}

MetricReport make_report(std::vector<MetricRow> rows, std::vector<std::string> unmatched) {
  MetricReport r;
  std::sort(rows.begin(), rows.end(), [](const MetricRow& x, const MetricRow& y) { return x.name < y.name; });
  r.rows = std::move(rows);
  r.mean.name = "mean";
  if (!r.rows.empty()) {
    for (const MetricRow& row : r.rows) {
      r.mean.psnr_db += row.psnr_db;
      r.mean.ssim += row.ssim;
      r.mean.ciede2000 += row.ciede2000;
    }
    const double n = static_cast<double>(r.rows.size());
    r.mean.psnr_db /= n;
    r.mean.ssim /= n;
    r.mean.ciede2000 /= n;
  }
  std::sort(unmatched.begin(), unmatched.end());
  r.unmatched = std::move(unmatched);
  r.warnings = r.unmatched.size() + (r.rows.empty() ? 1 : 0);
  return r;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(ErrorCode::kMissingFile, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".png" || ext == ".ppm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return out;
}

MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
  std::map<std::string, std::filesystem::path> pred, gt;
  for (const auto& p : list_images(pred_dir)) pred[p.filename().string()] = p;
  for (const auto& p : list_images(gt_dir)) gt[p.filename().string()] = p;
  std::vector<MetricRow> rows;
  std::vector<std::string> unmatched;
  for (const auto& [name, path] : pred) {
    auto it = gt.find(name);
    if (it == gt.end()) {
      unmatched.push_back("pred/" + name);
      continue;
    }
    rows.push_back(evaluate_pair(name, load_image(path), load_image(it->second)));
  }
  for (const auto& [name, path] : gt)
    if (!pred.count(name)) unmatched.push_back("gt/" + name);
  return make_report(std::move(rows), std::move(unmatched));
}

namespace {

nlohmann::json row_json(const MetricRow& r) {
  return {{"name", r.name}, {"psnr_db", r.psnr_db}, {"ssim", r.ssim}, {"ciede2000", r.ciede2000}};
}

}  // namespace

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const MetricRow& r : report.rows) rows.push_back(row_json(r));
  return {{"rows", rows},
          {"mean", row_json(report.mean)},
          {"unmatched", report.unmatched},
          {"warnings", report.warnings},
          {"config",
           {{"psnr_cap_db", kPsnrCap},
            {"ssim", {{"channel", "luma (0.299, 0.587, 0.114)"}, {"window", kSsimWindow}, {"sigma", kSsimSigma},
                      {"k1", kSsimK1}, {"k2", kSsimK2}, {"data_range", 1.0}}},
            {"ciede2000", {{"illuminant", "D65"}, {"aggregation", "per-pixel mean, then mean over images"}}}}}};
}

std::string to_csv(const MetricReport& report) {
  std::string out = "name,psnr_db,ssim,ciede2000\n";
  char buf[256];
  auto line = [&](const MetricRow& r) {
    std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%.10g\n", r.psnr_db, r.ssim, r.ciede2000);
    out += r.name + buf;
  };
  for (const MetricRow& r : report.rows) line(r);
  line(report.mean);
  return out;
}

}  // namespace prodehaze
