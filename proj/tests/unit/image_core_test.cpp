#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <fstream>
#include <string>

#include "prodehaze/error.hpp"
#include "prodehaze/image_io.hpp"
#include "prodehaze/image_tensor.hpp"
#include "prodehaze/seed.hpp"
#include "prodehaze/tensor_io.hpp"

using namespace prodehaze;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "prodehaze_unit_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no prodehaze::Error thrown";
  return ErrorCode::kIo;
}

}  // namespace

TEST(ImageTensor, LayoutAndShapeChecks) {
  ImageTensor t(2, 3, 4);
  EXPECT_EQ(t.size(), 24u);
  t.at(1, 2, 3) = 5.0;
  EXPECT_EQ(t[(1 * 3 + 2) * 4 + 3], 5.0);
  EXPECT_EQ(code_of([] { ImageTensor(2, 2, 1, std::vector<double>(3)); }), ErrorCode::kShapeMismatch);
}

TEST(AvgPool, HandExamples) {
  const ImageTensor a(2, 2, 1, {1, 1, 0, 0});
  const ImageTensor p = avg_pool(a, 2);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], 0.5);

  ImageTensor ramp(4, 4, 1);
  for (std::size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i);
  // blocks {0,1,4,5} {2,3,6,7} {8,9,12,13} {10,11,14,15}
  const ImageTensor q = avg_pool(ramp, 2);
  EXPECT_EQ(q, ImageTensor(2, 2, 1, {2.5, 4.5, 10.5, 12.5}));
}

TEST(AvgPool, FactorOneIdentityAndMeanPreserved) {
  Rng rng(3);
  const ImageTensor x = rng.uniform_tensor(8, 12, 3);
  EXPECT_EQ(avg_pool(x, 1), x);
  for (std::size_t f : {2u, 4u}) EXPECT_NEAR(mean(avg_pool(x, f)), mean(x), 1e-12);
}

TEST(AvgPool, RejectsBadFactor) {
  const ImageTensor x(6, 6, 1);
  EXPECT_EQ(code_of([&] { avg_pool(x, 4); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { avg_pool(x, 0); }), ErrorCode::kInvalidArgument);
}

TEST(Resampling, UpsampleSliceConcat) {
  const ImageTensor x(1, 2, 2, {1, 2, 3, 4});
  const ImageTensor up = upsample_nearest(x, 2);
  EXPECT_EQ(up.height(), 2u);
  EXPECT_EQ(up.width(), 4u);
  EXPECT_EQ(up.at(1, 3, 1), 4.0);
  EXPECT_EQ(avg_pool(up, 2), x);
  const ImageTensor c = concat_channels(x, slice_channels(x, 1, 2));
  EXPECT_EQ(c, ImageTensor(1, 2, 3, {1, 2, 2, 3, 4, 4}));
}

TEST(ImageIo, WhitePngLoadsAsOnes) {
  const fs::path p = scratch("white.png");
  save_image(ImageTensor(2, 2, 3, 1.0), p);
  const ImageTensor x = load_image(p);
  EXPECT_EQ(x, ImageTensor(2, 2, 3, 1.0));
}

TEST(ImageIo, BlackPpmFromRawBytes) {
  const fs::path p = scratch("black.ppm");
  write_bytes(p, std::string("P6\n1 1\n255\n") + std::string(3, '\0'));
  EXPECT_EQ(load_image(p), ImageTensor(1, 1, 3, 0.0));
}

TEST(ImageIo, PpmHeaderWithCommentAndValues) {
  const fs::path p = scratch("comment.ppm");
  write_bytes(p, std::string("P6\n# hi\n2 1\n255\n") + std::string("\xff\x00\x80\x00\x00\xff", 6));
  const ImageTensor x = load_image(p);
  EXPECT_EQ(x, ImageTensor(1, 2, 3, {1.0, 0.0, 128.0 / 255.0, 0.0, 0.0, 1.0}));
}

TEST(ImageIo, FailureClasses) {
  EXPECT_EQ(code_of([] { load_image(scratch("does_not_exist.png")); }), ErrorCode::kMissingFile);
  const fs::path trunc = scratch("trunc.ppm");
  write_bytes(trunc, std::string("P6\n2 2\n255\n") + std::string(5, 'a'));
  EXPECT_EQ(code_of([&] { load_image(trunc); }), ErrorCode::kCorruptPayload);
  const fs::path ascii = scratch("ascii.ppm");
  write_bytes(ascii, "P3\n1 1\n255\n0 0 0\n");
  EXPECT_EQ(code_of([&] { load_image(ascii); }), ErrorCode::kUnsupportedFormat);
  const fs::path junk = scratch("junk.png");
  write_bytes(junk, "GIF89a........");
  EXPECT_EQ(code_of([&] { load_image(junk); }), ErrorCode::kUnsupportedFormat);
  const fs::path bad_header = scratch("badheader.ppm");
  write_bytes(bad_header, "P6\nx y\n255\n");
  EXPECT_EQ(code_of([&] { load_image(bad_header); }), ErrorCode::kCorruptHeader);
  const fs::path maxval = scratch("maxval.ppm");
  write_bytes(maxval, std::string("P6\n1 1\n65535\n") + std::string(6, '\0'));
  EXPECT_EQ(code_of([&] { load_image(maxval); }), ErrorCode::kUnsupportedFormat);
}

TEST(ImageIo, RoundTripWithinQuantisation) {
  Rng rng(11);
  const ImageTensor x = rng.uniform_tensor(7, 5, 3);
  for (const char* name : {"rt.png", "rt.ppm"}) {
    const fs::path p = scratch(name);
    save_image(x, p);
    const ImageTensor y = load_image(p);
    ASSERT_TRUE(y.same_shape(x));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(y[i] - x[i]), 1.0 / 255.0 + 1e-12);
  }
  const fs::path half = scratch("half.png");
  save_image(ImageTensor(3, 3, 3, 0.5), half);
  for (double v : load_image(half).values()) EXPECT_LE(std::abs(v - 0.5), 1.0 / 255.0);
}

TEST(ImageIo, SaveContract) {
  EXPECT_EQ(code_of([] { save_image(ImageTensor(2, 2, 4), scratch("four.png")); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { save_image(ImageTensor(2, 2, 3), "/nonexistent_dir_xyz/out.png"); }),
            ErrorCode::kUnwritablePath);
  const fs::path grey = scratch("grey.png");
  save_image(ImageTensor(2, 3, 1, 1.0), grey);
  const ImageTensor g = load_image(grey);
  EXPECT_EQ(g.channels(), 3u);
  EXPECT_EQ(g.height(), 2u);
  EXPECT_EQ(g.width(), 3u);
}

TEST(TensorIo, SidecarRoundTripKeepsNonFinite) {
  ImageTensor t(2, 3, 2);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 * static_cast<double>(i) - 0.3;
  t[4] = -std::numeric_limits<double>::infinity();
  const fs::path stem = scratch("side");
  write_tensor_sidecar(t, stem, {{"note", "x"}});
  const ImageTensor back = read_tensor_sidecar(stem);
  EXPECT_EQ(back, t);
  const auto header = read_json_file(scratch("side.json"));
  EXPECT_EQ(header["h"], 2);
  EXPECT_EQ(header["w"], 3);
  EXPECT_EQ(header["c"], 2);
  EXPECT_EQ(header["dtype"], "f64");
  EXPECT_EQ(header["note"], "x");
  EXPECT_EQ(fs::file_size(scratch("side.bin")), t.size() * sizeof(double));
}

TEST(Seed, DerivationIsStableAndLabelSensitive) {
  EXPECT_EQ(derive_seed(1, "a"), derive_seed(1, "a"));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(2, "a"));
  EXPECT_NE(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
  Rng r1(5), r2(5);
  EXPECT_EQ(r1.normal_tensor(3, 3, 2), r2.normal_tensor(3, 3, 2));
}
