#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace seedcl {

using Rgb = std::array<std::uint8_t, 3>;

/// Owned 8-bit RGB raster, row-major, with an optional per-pixel alpha mask.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int width, int height, Rgb fill = {0, 0, 0});
  Image(int width, int height, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  std::uint8_t& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  Rgb pixel(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set_pixel(int x, int y, Rgb v) {
    for (int c = 0; c < kChannels; ++c) at(x, y, c) = v[c];
  }

  const std::vector<std::uint8_t>& data() const noexcept { return data_; }
  std::vector<std::uint8_t>& data() noexcept { return data_; }

  bool has_alpha() const noexcept { return alpha_.has_value(); }
  const std::vector<std::uint8_t>& alpha() const { return alpha_.value(); }
  std::vector<std::uint8_t>& alpha() { return alpha_.value(); }
  std::uint8_t alpha_at(int x, int y) const {
    return alpha_ ? (*alpha_)[static_cast<std::size_t>(y) * width_ + x] : std::uint8_t{255};
  }
  /// Installs a mask; throws ShapeMismatch unless it has width*height entries.
  void set_alpha(std::vector<std::uint8_t> mask);
  void clear_alpha() { alpha_.reset(); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
  std::optional<std::vector<std::uint8_t>> alpha_;
};

/// Rounds half-up and clamps to [0, 255].
std::uint8_t to_u8(double v) noexcept;

/// 0.299 R + 0.587 G + 0.114 B
double luminance(Rgb p) noexcept;

/// Lossless PNG. RGBA files load with the alpha channel as mask; images with a
/// mask are written as RGBA, others as RGB.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

}  // namespace seedcl
