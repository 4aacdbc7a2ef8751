#pragma once

#include <array>

#include "seedcl/image.hpp"
#include "seedcl/rng.hpp"

namespace seedcl {

struct JitterStrengths {
  double brightness = 0.8;  // factors drawn from [1 - s, 1 + s]
  double contrast = 0.8;
  double saturation = 0.8;
  double hue = 36.0;  // degrees, shift drawn from [-h, h]
};

struct AugmentationPolicy {
  double crop_scale_min = 0.2;
  double crop_scale_max = 1.0;
  double flip_probability = 0.5;
  JitterStrengths jitter;
  double grayscale_probability = 0.2;
  int output_size = 32;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

struct ViewPair {
  Image view_a;
  Image view_b;
  int source_index = 0;
};

/// Bilinear resampling of the rectangle [x0, x0 + w) x [y0, y0 + h) to
/// out_w x out_h, with pixel-centre alignment.
Image resize_region(const Image& img, int x0, int y0, int w, int h, int out_w, int out_h);
inline Image resize(const Image& img, int out_w, int out_h) {
  return resize_region(img, 0, 0, img.width(), img.height(), out_w, out_h);
}

/// Random axis-aligned crop covering a fraction of the area drawn from
/// [scale_min, scale_max] with aspect ratio in [3/4, 4/3], resized to
/// output_size x output_size. Falls back to the whole image when ten draws
/// fail to fit.
Image random_crop_resize(const Image& img, double scale_min, double scale_max, int output_size, Rng& rng);

Image flip_horizontal(const Image& img);
Image horizontal_flip(const Image& img, double probability, Rng& rng);

enum class JitterOp { brightness, contrast, saturation, hue };

struct JitterDraw {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue_shift = 0.0;
  std::array<JitterOp, 4> order{JitterOp::brightness, JitterOp::contrast, JitterOp::saturation, JitterOp::hue};
};

JitterDraw draw_jitter(const JitterStrengths& strengths, Rng& rng);
/// Applies the drawn factors in draw.order on a floating-point copy, clamping
/// to [0, 255] after each step and rounding half-up at the end.
Image apply_jitter(const Image& img, const JitterDraw& draw);
inline Image color_jitter(const Image& img, const JitterStrengths& strengths, Rng& rng) {
  return apply_jitter(img, draw_jitter(strengths, rng));
}

Image grayscale(const Image& img);
Image to_grayscale(const Image& img, double probability, Rng& rng);

/// crop-resize -> flip -> jitter -> grayscale
Image augment(const Image& img, const AugmentationPolicy& policy, Rng& rng);
/// Two independent draws of the pipeline from the same stream.
ViewPair make_views(const Image& img, const AugmentationPolicy& policy, Rng& rng, int source_index = 0);

}  // namespace seedcl
