#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "gregait/common.hpp"
#include "gregait/image.hpp"

using namespace gregait;

namespace {
ImageF filled(int64_t h, int64_t w, float v) {
  ImageF img({3, h, w});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = v;
  return img;
}
}  // namespace

TEST_CASE("pad_and_resize: tall input pads width") {
  // 300x100 against a 2:1 target: width padded to 150 before resizing,
  // so the content covers the middle two thirds of the output.
  ImageF out = pad_and_resize(filled(300, 100, 1.0f), 448, 224);
  REQUIRE(out.shape(1) == 448);
  REQUIRE(out.shape(2) == 224);
  // pad 25 px each side of 150 -> content x in [25,125) -> out [37.3,186.7)
  CHECK(out(0, 224, 10) == doctest::Approx(0.0));
  CHECK(out(0, 224, 210) == doctest::Approx(0.0));
  CHECK(out(0, 224, 112) == doctest::Approx(1.0));
  CHECK(out(2, 10, 112) == doctest::Approx(1.0));
}

TEST_CASE("pad_and_resize: wide input pads height") {
  // 100x300: height padded to 600; content rows [250,350) of 600
  // -> output rows [186.7,261.3)
  ImageF out = pad_and_resize(filled(100, 300, 1.0f), 448, 224);
  REQUIRE(out.shape(1) == 448);
  REQUIRE(out.shape(2) == 224);
  CHECK(out(0, 5, 112) == doctest::Approx(0.0));
  CHECK(out(0, 440, 112) == doctest::Approx(0.0));
  CHECK(out(1, 224, 112) == doctest::Approx(1.0));
}

TEST_CASE("pad_and_resize: exact-ratio input is only resized (no pad)") {
  ImageF img = filled(100, 50, 0.5f);
  ImageF out = pad_and_resize(img, 448, 224);
  for (int64_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == 0.5f);
}

TEST_CASE("pad_and_resize: target-size input passes through unchanged") {
  SplitMix64 rng(21);
  ImageF img({3, 448, 224});
  for (int64_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<float>(rng.uniform());
  ImageF out = pad_and_resize(img, 448, 224);
  for (int64_t i = 0; i < img.numel(); ++i) REQUIRE(out[i] == img[i]);
}

TEST_CASE("resize_image: plain stretch, no padding") {
  // a tall all-ones image stretched to 4x2 stays all ones everywhere
  ImageF out = resize_image(filled(8, 2, 1.0f), 4, 2);
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(1.0));
  REQUIRE(out.shape(1) == 4);
  REQUIRE(out.shape(2) == 2);
}

TEST_CASE("png roundtrip preserves pixels to 8-bit precision") {
  SplitMix64 rng(22);
  ImageF img({3, 13, 9});
  for (int64_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<float>(rng.uniform());
  const std::string path =
      (std::filesystem::temp_directory_path() / "gg_png_rt.png").string();
  write_png(path, img);
  ImageF back = read_image(path);
  REQUIRE(back.shape(0) == 3);
  REQUIRE(back.shape(1) == 13);
  REQUIRE(back.shape(2) == 9);
  for (int64_t i = 0; i < img.numel(); ++i)
    CHECK(std::abs(back[i] - img[i]) <= 0.5f / 255.0f + 1e-6f);
  std::remove(path.c_str());
}

TEST_CASE("write_png_gray accepts a [h,w] map") {
  Tensor<float> m({5, 4});
  for (int64_t i = 0; i < m.numel(); ++i) m[i] = float(i) / float(m.numel());
  const std::string path =
      (std::filesystem::temp_directory_path() / "gg_gray.png").string();
  write_png_gray(path, m);
  ImageF back = read_image(path);
  REQUIRE(back.shape(1) == 5);
  REQUIRE(back.shape(2) == 4);
  // grayscale: all three channels equal
  for (int64_t y = 0; y < 5; ++y)
    for (int64_t x = 0; x < 4; ++x)
      CHECK(back(0, y, x) == back(2, y, x));
  std::remove(path.c_str());
}
