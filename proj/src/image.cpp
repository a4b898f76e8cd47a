#include "gregait/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "gregait/common.hpp"
#include "gregait/kernels.hpp"

namespace gregait {

namespace {

ImageF from_rgb8(const std::vector<unsigned char>& buf, int64_t h, int64_t w) {
  ImageF img({3, h, w});
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        img(c, y, x) = buf[(y * w + x) * 3 + c] / 255.0f;
      }
    }
  }
  return img;
}

ImageF read_png_file(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  GG_CHECK(fp, "cannot open image: " << path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail("png decode failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const int64_t w = png_get_image_width(png, info);
  const int64_t h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w * 3);
  std::vector<png_bytep> rows(h);
  for (int64_t y = 0; y < h; ++y) rows[y] = buf.data() + y * w * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return from_rgb8(buf, h, w);
}

ImageF read_pnm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  GG_CHECK(in, "cannot open image: " << path);
  std::string magic;
  in >> magic;
  GG_CHECK(magic == "P6" || magic == "P5", "unsupported PNM magic '"
                                               << magic << "' in " << path);
  auto next_int = [&]() {
    // skip whitespace and '#' comment lines
    for (;;) {
      int ch = in.peek();
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(ch)) {
        in.get();
      } else {
        break;
      }
    }
    int64_t v = 0;
    in >> v;
    return v;
  };
  const int64_t w = next_int();
  const int64_t h = next_int();
  const int64_t maxval = next_int();
  GG_CHECK(w > 0 && h > 0, "empty image: " << path);
  GG_CHECK(maxval == 255, "only 8-bit PNM supported: " << path);
  in.get();  // single whitespace after header
  const int ch = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> raw(static_cast<size_t>(h) * w * ch);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  GG_CHECK(in.gcount() == static_cast<std::streamsize>(raw.size()),
           "truncated PNM payload: " << path);
  std::vector<unsigned char> rgb(static_cast<size_t>(h) * w * 3);
  for (int64_t i = 0; i < h * w; ++i) {
    for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = raw[i * ch + (ch == 3 ? c : 0)];
  }
  return from_rgb8(rgb, h, w);
}

}  // namespace

ImageF read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  GG_CHECK(probe, "cannot open image: " << path);
  unsigned char sig[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(sig), 2);
  probe.close();
  if (sig[0] == 0x89 && sig[1] == 'P') return read_png_file(path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return read_pnm_file(path);
  fail("unrecognized image format: " + path);
}

void write_png(const std::string& path, const ImageF& img) {
  GG_CHECK(img.ndim() == 3 && img.shape(0) == 3,
           "write_png expects [3,H,W], got ndim=" << img.ndim());
  const int64_t h = img.shape(1), w = img.shape(2);
  FILE* fp = std::fopen(path.c_str(), "wb");
  GG_CHECK(fp, "cannot write image: " << path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail("png encode failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        const float v = std::clamp(img(c, y, x), 0.0f, 1.0f);
        row[x * 3 + c] = static_cast<unsigned char>(v * 255.0f + 0.5f);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

void write_png_gray(const std::string& path, const Tensor<float>& map) {
  GG_CHECK(map.ndim() == 2, "write_png_gray expects [H,W]");
  ImageF rgb({3, map.shape(0), map.shape(1)});
  for (int64_t y = 0; y < map.shape(0); ++y) {
    for (int64_t x = 0; x < map.shape(1); ++x) {
      for (int64_t c = 0; c < 3; ++c) rgb(c, y, x) = map(y, x);
    }
  }
  write_png(path, rgb);
}

ImageF pad_and_resize(const ImageF& img, int64_t target_h, int64_t target_w) {
  GG_CHECK(img.ndim() == 3 && img.shape(0) == 3, "expected [3,H,W] image");
  const int64_t h = img.shape(1), w = img.shape(2);
  GG_CHECK(h >= 1 && w >= 1, "zero-area image");

  // equalize aspect ratio: H*target_w vs W*target_h decides the short axis
  int64_t ph = h, pw = w, off_y = 0, off_x = 0;
  if (h * target_w > w * target_h) {
    pw = (h * target_w + target_h - 1) / target_h;  // ceil
    off_x = (pw - w) / 2;                           // odd remainder → right
  } else if (h * target_w < w * target_h) {
    ph = (w * target_h + target_w - 1) / target_w;
    off_y = (ph - h) / 2;  // odd remainder → bottom
  }

  const ImageF* src = &img;
  ImageF padded;
  if (ph != h || pw != w) {
    padded = ImageF({3, ph, pw});
    padded.zero();
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          padded(c, off_y + y, off_x + x) = img(c, y, x);
        }
      }
    }
    src = &padded;
  }

  if (src->shape(1) == target_h && src->shape(2) == target_w) return *src;
  ImageF out({3, target_h, target_w});
  kernels::bilinear_resize(src->data(), 3, src->shape(1), src->shape(2),
                           out.data(), target_h, target_w);
  return out;
}

ImageF resize_image(const ImageF& img, int64_t target_h, int64_t target_w) {
  GG_CHECK(img.ndim() == 3 && img.shape(0) == 3, "expected [3,H,W] image");
  GG_CHECK(img.shape(1) >= 1 && img.shape(2) >= 1, "zero-area image");
  if (img.shape(1) == target_h && img.shape(2) == target_w) return img;
  ImageF out({3, target_h, target_w});
  kernels::bilinear_resize(img.data(), 3, img.shape(1), img.shape(2),
                           out.data(), target_h, target_w);
  return out;
}

}  // namespace gregait
