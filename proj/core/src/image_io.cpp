#include "mstn/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace mstn {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void check_rgb_shape(const Shape& s, const std::string& path) {
  if (s.n != 1 || s.c != 3) {
    throw UsageError("write_png_rgb: expected (1,3,H,W), got " + s.str() +
                     " for " + path);
  }
}

template <class T>
void write_rgb_impl(const std::string& path, const Tensor<T>& image) {
  const Shape& s = image.shape();
  check_rgb_shape(s, path);
  const auto v = image.data();
  const size_t plane = static_cast<size_t>(s.h) * s.w;

  std::vector<png_byte> rows(static_cast<size_t>(s.h) * s.w * 3);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double val = static_cast<double>(v[plane * c + y * s.w + x]);
        val = val < 0.0 ? 0.0 : (val > 1.0 ? 1.0 : val);
        rows[(static_cast<size_t>(y) * s.w + x) * 3 + c] =
            static_cast<png_byte>(std::lround(255.0 * val));
      }
    }
  }

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng: write struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng: info struct allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng: failed writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, s.w, s.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < s.h; ++y) {
    png_write_row(png, rows.data() + static_cast<size_t>(y) * s.w * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor<double> read_png_rgb(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 ||
      png_sig_cmp(header, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path);
  }

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng: read struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng: info struct allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng: failed reading " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> raw(rowbytes * h);
  std::vector<png_bytep> row_ptrs(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = raw.data() + rowbytes * y;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (rowbytes < static_cast<size_t>(w) * 3) {
    throw IoError("unexpected PNG row layout in " + path);
  }

  Tensor<double> out = Tensor<double>::zeros({1, 3, h, w});
  auto dst = out.data();
  const size_t plane = static_cast<size_t>(h) * w;
  for (int y = 0; y < h; ++y) {
    const png_byte* row = raw.data() + rowbytes * y;
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        dst[plane * c + static_cast<size_t>(y) * w + x] =
            row[x * 3 + c] / 255.0;
      }
    }
  }
  return out;
}

void write_png_rgb(const std::string& path, const Tensor<double>& image) {
  write_rgb_impl(path, image);
}

void write_png_rgb(const std::string& path, const Tensor<float>& image) {
  write_rgb_impl(path, image);
}

}  // namespace mstn
