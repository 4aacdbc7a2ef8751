#include "seedcl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "seedcl/color.hpp"
#include "seedcl/error.hpp"

namespace seedcl {

void AugmentationPolicy::validate() const {
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0))
    throw ConfigError("augmentation crop scale must satisfy 0 < min <= max <= 1");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(flip_probability) || !prob(grayscale_probability))
    throw ConfigError("augmentation probabilities must lie in [0, 1]");
  if (jitter.brightness < 0 || jitter.contrast < 0 || jitter.saturation < 0 || jitter.hue < 0)
    throw ConfigError("jitter strengths must be non-negative");
  if (output_size <= 0) throw ConfigError("augmentation output size must be positive");
}

Image resize_region(const Image& img, int x0, int y0, int w, int h, int out_w, int out_h) {
  if (img.empty() || w <= 0 || h <= 0) throw ShapeMismatch("cannot resize an empty region");
  Image out(out_w, out_h);
  const double sx = static_cast<double>(w) / out_w;
  const double sy = static_cast<double>(h) / out_h;

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int n_out, double scale, int origin, int extent) {
    std::vector<Tap> t(n_out);
    for (int o = 0; o < n_out; ++o) {
      double s = (o + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(extent - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, extent - 1);
      t[o] = Tap{origin + i0, origin + i1, s - i0};
    }
    return t;
  };
  const auto tx = taps(out_w, sx, x0, w);
  const auto ty = taps(out_h, sy, y0, h);

  for (int y = 0; y < out_h; ++y) {
    const Tap& vy = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const Tap& vx = tx[x];
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(vx.i0, vy.i0, c) * (1 - vx.f) + img.at(vx.i1, vy.i0, c) * vx.f;
        const double bot = img.at(vx.i0, vy.i1, c) * (1 - vx.f) + img.at(vx.i1, vy.i1, c) * vx.f;
        out.at(x, y, c) = to_u8(top * (1 - vy.f) + bot * vy.f);
      }
    }
  }
  return out;
}

Image random_crop_resize(const Image& img, double scale_min, double scale_max, int output_size, Rng& rng) {
  if (img.empty()) throw ShapeMismatch("cannot crop an empty image");
  const double area = static_cast<double>(img.pixel_count());
  const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(scale_min, scale_max);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(target * aspect)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / aspect)));
    if (w >= 1 && h >= 1 && w <= img.width() && h <= img.height()) {
      const int x0 = rng.uniform_int(0, img.width() - w);
      const int y0 = rng.uniform_int(0, img.height() - h);
      return resize_region(img, x0, y0, w, h, output_size, output_size);
    }
  }
  return resize_region(img, 0, 0, img.width(), img.height(), output_size, output_size);
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.set_pixel(img.width() - 1 - x, y, img.pixel(x, y));
  if (img.has_alpha()) {
    std::vector<std::uint8_t> a(img.pixel_count());
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        a[static_cast<std::size_t>(y) * img.width() + (img.width() - 1 - x)] = img.alpha_at(x, y);
    out.set_alpha(std::move(a));
  }
  return out;
}

Image horizontal_flip(const Image& img, double probability, Rng& rng) {
  return rng.bernoulli(probability) ? flip_horizontal(img) : img;
}

JitterDraw draw_jitter(const JitterStrengths& s, Rng& rng) {
  JitterDraw d;
  d.brightness = std::max(0.0, rng.uniform(1.0 - s.brightness, 1.0 + s.brightness));
  d.contrast = std::max(0.0, rng.uniform(1.0 - s.contrast, 1.0 + s.contrast));
  d.saturation = std::max(0.0, rng.uniform(1.0 - s.saturation, 1.0 + s.saturation));
  d.hue_shift = rng.uniform(-s.hue, s.hue);
  for (std::size_t i = d.order.size() - 1; i > 0; --i) std::swap(d.order[i], d.order[rng.below(i + 1)]);
  return d;
}

Image apply_jitter(const Image& img, const JitterDraw& draw) {
  const std::size_t n = img.pixel_count();
  std::vector<double> px(img.data().begin(), img.data().end());
  auto clamp_all = [&] {
    for (double& v : px) v = std::clamp(v, 0.0, 255.0);
  };
  auto gray = [&](std::size_t i) { return 0.299 * px[i * 3] + 0.587 * px[i * 3 + 1] + 0.114 * px[i * 3 + 2]; };

  for (JitterOp op : draw.order) {
    switch (op) {
      case JitterOp::brightness:
        if (draw.brightness == 1.0) break;
        for (double& v : px) v *= draw.brightness;
        clamp_all();
        break;
      case JitterOp::contrast: {
        if (draw.contrast == 1.0) break;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += gray(i);
        mean /= static_cast<double>(n);
        for (double& v : px) v = mean + draw.contrast * (v - mean);
        clamp_all();
        break;
      }
      case JitterOp::saturation:
        if (draw.saturation == 1.0) break;
        for (std::size_t i = 0; i < n; ++i) {
          const double g = gray(i);
          for (int c = 0; c < 3; ++c) px[i * 3 + c] = g + draw.saturation * (px[i * 3 + c] - g);
        }
        clamp_all();
        break;
      case JitterOp::hue:
        if (draw.hue_shift == 0.0) break;
        for (std::size_t i = 0; i < n; ++i) {
          Hsv hsv = rgb_to_hsv(px[i * 3], px[i * 3 + 1], px[i * 3 + 2]);
          hsv.h += draw.hue_shift;
          hsv_to_rgb(hsv, px[i * 3], px[i * 3 + 1], px[i * 3 + 2]);
        }
        clamp_all();
        break;
    }
  }
  Image out = img;
  for (std::size_t i = 0; i < px.size(); ++i) out.data()[i] = to_u8(px[i]);
  return out;
}

Image grayscale(const Image& img) {
  Image out = img;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const auto* p = &img.data()[i * 3];
    const std::uint8_t l = to_u8(luminance({p[0], p[1], p[2]}));
    for (int c = 0; c < 3; ++c) out.data()[i * 3 + c] = l;
  }
  return out;
}

Image to_grayscale(const Image& img, double probability, Rng& rng) {
  return rng.bernoulli(probability) ? grayscale(img) : img;
}

Image augment(const Image& img, const AugmentationPolicy& policy, Rng& rng) {
  Image out = random_crop_resize(img, policy.crop_scale_min, policy.crop_scale_max, policy.output_size, rng);
  out = horizontal_flip(out, policy.flip_probability, rng);
  out = color_jitter(out, policy.jitter, rng);
  return to_grayscale(out, policy.grayscale_probability, rng);
}

ViewPair make_views(const Image& img, const AugmentationPolicy& policy, Rng& rng, int source_index) {
  ViewPair pair;
  pair.view_a = augment(img, policy, rng);
  pair.view_b = augment(img, policy, rng);
  pair.source_index = source_index;
  return pair;
}

}  // namespace seedcl
