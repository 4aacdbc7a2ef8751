#include "seedcl/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "seedcl/error.hpp"

namespace seedcl {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw ShapeMismatch("negative image dimensions");
  data_.resize(pixel_count() * kChannels);
  for (std::size_t i = 0; i < pixel_count(); ++i)
    for (int c = 0; c < kChannels; ++c) data_[i * kChannels + c] = fill[c];
}

Image::Image(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 0 || height < 0 || data_.size() != pixel_count() * kChannels)
    throw ShapeMismatch("image data length does not match " + std::to_string(width) + "x" +
                        std::to_string(height) + "x3");
}

void Image::set_alpha(std::vector<std::uint8_t> mask) {
  if (mask.size() != pixel_count()) throw ShapeMismatch("alpha mask length does not match image");
  alpha_ = std::move(mask);
}

std::uint8_t to_u8(double v) noexcept {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::floor(v + 0.5));
}

double luminance(Rgb p) noexcept { return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]; }

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoFailure("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_error_fn(png_structp, png_const_charp msg) { throw IoFailure(msg); }
void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  if (!png) throw IoFailure("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  try {
    png_init_io(png, file.get());
    png_read_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    const bool has_alpha = (color & PNG_COLOR_MASK_ALPHA) != 0 || png_get_valid(png, info, PNG_INFO_tRNS);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (!has_alpha) png_set_filler(png, 0xFF, PNG_FILLER_AFTER);
    png_read_update_info(png, info);

    std::vector<std::uint8_t> rgba(static_cast<std::size_t>(w) * h * 4);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = rgba.data() + static_cast<std::size_t>(y) * w * 4;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    Image img(w, h);
    std::vector<std::uint8_t> mask(img.pixel_count());
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      for (int c = 0; c < 3; ++c) img.data()[i * 3 + c] = rgba[i * 4 + c];
      mask[i] = rgba[i * 4 + 3];
    }
    if (has_alpha) img.set_alpha(std::move(mask));
    return img;
  } catch (const IoFailure& e) {
    throw IoFailure(path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const Image& img) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  if (!png) throw IoFailure("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  const int channels = img.has_alpha() ? 4 : 3;
  std::vector<std::uint8_t> packed;
  const std::uint8_t* src = img.data().data();
  if (img.has_alpha()) {
    packed.resize(img.pixel_count() * 4);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      for (int c = 0; c < 3; ++c) packed[i * 4 + c] = img.data()[i * 3 + c];
      packed[i * 4 + 3] = img.alpha()[i];
    }
    src = packed.data();
  }

  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 img.has_alpha() ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 3);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width()) * channels;
    for (int y = 0; y < img.height(); ++y)
      png_write_row(png, const_cast<png_bytep>(src + static_cast<std::size_t>(y) * stride));
    png_write_end(png, nullptr);
  } catch (const IoFailure& e) {
    throw IoFailure(path.string() + ": " + e.what());
  }
}

}  // namespace seedcl
