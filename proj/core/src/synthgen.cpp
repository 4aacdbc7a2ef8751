#include "seedcl/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>

#include "seedcl/color.hpp"
#include "seedcl/error.hpp"
#include "seedcl/parallel.hpp"

namespace seedcl {

namespace fs = std::filesystem;

int otsu_threshold(std::span<const std::uint64_t, 256> histogram) {
  std::uint64_t total = 0;
  double weighted = 0.0;
  for (int i = 0; i < 256; ++i) {
    total += histogram[i];
    weighted += static_cast<double>(i) * static_cast<double>(histogram[i]);
  }
  if (total == 0) return 0;

  double best = -1.0;
  int best_t = 0;
  std::uint64_t w0 = 0;
  double sum0 = 0.0;
  for (int t = 0; t < 255; ++t) {
    w0 += histogram[t];
    sum0 += static_cast<double>(t) * static_cast<double>(histogram[t]);
    if (w0 == 0) continue;
    const std::uint64_t w1 = total - w0;
    if (w1 == 0) break;
    const double m0 = sum0 / static_cast<double>(w0);
    const double m1 = (weighted - sum0) / static_cast<double>(w1);
    const double between = static_cast<double>(w0) * static_cast<double>(w1) * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

namespace {

struct Component {
  std::size_t size = 0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  int label = 0;
};

}  // namespace

Cutout extract_cutout(const Image& photo, std::string class_label, std::string source_id,
                      const ThresholdConfig& config) {
  if (photo.empty()) throw NoForegroundFound(source_id + ": empty photo");
  const int w = photo.width();
  const int h = photo.height();
  const std::size_t n = photo.pixel_count();

  std::vector<std::uint8_t> lum(n);
  std::array<std::uint64_t, 256> hist{};
  int lo = 255, hi = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t l = to_u8(luminance(photo.pixel(x, y)));
      lum[static_cast<std::size_t>(y) * w + x] = l;
      ++hist[l];
      lo = std::min<int>(lo, l);
      hi = std::max<int>(hi, l);
    }
  }
  if (hi - lo < config.min_contrast && !config.fixed_threshold)
    throw NoForegroundFound(source_id + ": photo has no luminance contrast");
  const int threshold = config.fixed_threshold.value_or(otsu_threshold(hist));

  // 8-connected labelling of foreground (dark) pixels.
  std::vector<int> labels(n, 0);
  std::vector<Component> components;
  std::vector<std::pair<int, int>> stack;
  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      const std::size_t si = static_cast<std::size_t>(sy) * w + sx;
      if (lum[si] > threshold || labels[si] != 0) continue;
      Component comp{0, sx, sy, sx, sy, static_cast<int>(components.size()) + 1};
      labels[si] = comp.label;
      stack.assign(1, {sx, sy});
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        ++comp.size;
        comp.min_x = std::min(comp.min_x, x);
        comp.max_x = std::max(comp.max_x, x);
        comp.min_y = std::min(comp.min_y, y);
        comp.max_y = std::max(comp.max_y, y);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
            if (lum[ni] <= threshold && labels[ni] == 0) {
              labels[ni] = comp.label;
              stack.emplace_back(nx, ny);
            }
          }
        }
      }
      components.push_back(comp);
    }
  }
  if (components.empty()) throw NoForegroundFound(source_id + ": thresholding found no object pixels");

  const auto largest = std::max_element(components.begin(), components.end(),
                                        [](const Component& a, const Component& b) { return a.size < b.size; });
  if (static_cast<double>(largest->size) > config.max_coverage * static_cast<double>(n))
    throw AmbiguousForeground(source_id + ": largest component covers " +
                              std::to_string(100.0 * static_cast<double>(largest->size) / static_cast<double>(n)) +
                              "% of the photo");

  const int x0 = std::max(0, largest->min_x - config.padding);
  const int y0 = std::max(0, largest->min_y - config.padding);
  const int x1 = std::min(w - 1, largest->max_x + config.padding);
  const int y1 = std::min(h - 1, largest->max_y + config.padding);
  Image crop(x1 - x0 + 1, y1 - y0 + 1);
  std::vector<std::uint8_t> alpha(crop.pixel_count(), 0);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      crop.set_pixel(x - x0, y - y0, photo.pixel(x, y));
      if (labels[static_cast<std::size_t>(y) * w + x] == largest->label)
        alpha[static_cast<std::size_t>(y - y0) * crop.width() + (x - x0)] = 255;
    }
  }
  crop.set_alpha(std::move(alpha));
  return Cutout{std::move(crop), std::move(class_label), std::move(source_id)};
}

std::vector<Cutout> extract_cutouts(std::span<const Image> photos, const std::string& class_label,
                                    const ThresholdConfig& config) {
  std::vector<Cutout> out;
  out.reserve(photos.size());
  for (std::size_t i = 0; i < photos.size(); ++i)
    out.push_back(extract_cutout(photos[i], class_label, class_label + "/" + std::to_string(i), config));
  return out;
}

Image rotate_cutout(const Image& cutout, double degrees) {
  if (degrees == 0.0) return cutout;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const int sw = cutout.width(), sh = cutout.height();
  const int ow = std::max(1, static_cast<int>(std::ceil(std::fabs(sw * c) + std::fabs(sh * s) - 1e-9)));
  const int oh = std::max(1, static_cast<int>(std::ceil(std::fabs(sw * s) + std::fabs(sh * c) - 1e-9)));
  const double scx = sw / 2.0, scy = sh / 2.0, ocx = ow / 2.0, ocy = oh / 2.0;

  auto sample = [&](int x, int y, std::array<double, 4>& acc, double weight) {
    if (x < 0 || y < 0 || x >= sw || y >= sh) return;
    const double a = cutout.alpha_at(x, y) / 255.0;
    for (int ch = 0; ch < 3; ++ch) acc[ch] += weight * a * cutout.at(x, y, ch);
    acc[3] += weight * a;
  };

  Image out(ow, oh);
  std::vector<std::uint8_t> alpha(out.pixel_count(), 0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double dx = x + 0.5 - ocx, dy = y + 0.5 - ocy;
      // inverse rotation into source pixel-centre coordinates
      const double sx = c * dx + s * dy + scx - 0.5;
      const double sy = -s * dx + c * dy + scy - 0.5;
      const int ix = static_cast<int>(std::floor(sx)), iy = static_cast<int>(std::floor(sy));
      const double fx = sx - ix, fy = sy - iy;
      std::array<double, 4> acc{};
      sample(ix, iy, acc, (1 - fx) * (1 - fy));
      sample(ix + 1, iy, acc, fx * (1 - fy));
      sample(ix, iy + 1, acc, (1 - fx) * fy);
      sample(ix + 1, iy + 1, acc, fx * fy);
      const std::uint8_t a = to_u8(acc[3] * 255.0);
      alpha[static_cast<std::size_t>(y) * ow + x] = a;
      if (a > 0)
        for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = to_u8(acc[ch] / acc[3]);
    }
  }
  out.set_alpha(std::move(alpha));
  return out;
}

namespace {

void blend(Image& canvas, const Image& sprite, int ox, int oy) {
  for (int y = 0; y < sprite.height(); ++y) {
    for (int x = 0; x < sprite.width(); ++x) {
      const unsigned a = sprite.alpha_at(x, y);
      if (a == 0) continue;
      for (int c = 0; c < 3; ++c) {
        std::uint8_t& dst = canvas.at(ox + x, oy + y, c);
        dst = static_cast<std::uint8_t>((a * sprite.at(x, y, c) + (255u - a) * dst + 127u) / 255u);
      }
    }
  }
}

bool overlaps(const Placement& a, const Placement& b) {
  return a.x < b.x + b.width && b.x < a.x + a.width && a.y < b.y + b.height && b.y < a.y + a.height;
}

}  // namespace

Composition compose_image(std::span<const Cutout> cutouts, int count, int canvas_width, int canvas_height,
                          const Background& background, const ComposeOptions& options, Rng& rng) {
  if (count < 0) throw ConfigError("seed count must be non-negative");
  Composition out;
  if (const auto* color = std::get_if<Rgb>(&background)) {
    out.image = Image(canvas_width, canvas_height, *color);
  } else {
    const Image& bg = std::get<Image>(background);
    if (bg.width() != canvas_width || bg.height() != canvas_height)
      throw ShapeMismatch("background image does not match the canvas size");
    out.image = bg;
    out.image.clear_alpha();
  }
  if (count == 0) return out;
  if (cutouts.empty()) throw ConfigError("compose_image needs at least one cutout");
  for (const auto& c : cutouts) {
    if (c.class_label != cutouts.front().class_label)
      throw ConfigError("compose_image cutouts must share one class label");
  }

  out.placements.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    const int index = static_cast<int>(rng.below(cutouts.size()));
    const int attempts = options.allow_overlap ? 1 : options.max_retries;
    bool placed = false;
    for (int attempt = 0; attempt < attempts && !placed; ++attempt) {
      const double rotation = options.rotate ? rng.uniform(0.0, 360.0) : 0.0;
      Image sprite = rotate_cutout(cutouts[index].image, rotation);
      if (sprite.width() > canvas_width || sprite.height() > canvas_height)
        throw PlacementFailure("cutout " + cutouts[index].source_id + " does not fit the canvas");
      Placement p{index, rng.uniform_int(0, canvas_width - sprite.width()),
                  rng.uniform_int(0, canvas_height - sprite.height()), rotation, sprite.width(), sprite.height()};
      if (!options.allow_overlap &&
          std::any_of(out.placements.begin(), out.placements.end(),
                      [&](const Placement& q) { return overlaps(p, q); }))
        continue;
      blend(out.image, sprite, p.x, p.y);
      out.placements.push_back(p);
      placed = true;
    }
    if (!placed)
      throw PlacementFailure("could not place seed " + std::to_string(n) + " without overlap after " +
                             std::to_string(options.max_retries) + " attempts");
  }
  return out;
}

std::string toy_class_name(int class_index) { return "toy" + std::to_string(class_index); }

ToyPalette parse_toy_palette(std::string_view name) {
  if (name == "separated") return ToyPalette::separated;
  if (name == "shared") return ToyPalette::shared;
  throw ConfigError("unknown toy palette '" + std::string(name) + "' (expected separated or shared)");
}

std::vector<Cutout> generate_toy_cutouts(int class_count, int per_class, Rng& rng, const ToyCutoutOptions& options) {
  if (class_count < 2 || class_count > 6) throw ConfigError("toy class count must be in [2, 6]");
  if (per_class < 1) throw ConfigError("toy cutouts per class must be positive");
  if (options.major_axis < 3) throw ConfigError("toy major axis must be at least 3 pixels");
  if (options.hue_spread < 0.0 || options.hue_spread > 180.0) throw ConfigError("toy hue spread must lie in [0, 180]");
  if (options.hue_jitter < 0.0 || options.hue_jitter > 180.0) throw ConfigError("toy hue jitter must lie in [0, 180]");
  if (options.palette == ToyPalette::separated && (options.hue_step <= 0.0 || options.hue_step * class_count > 360.0))
    throw ConfigError("toy hue step must be positive and fit all classes on the hue circle");

  struct Traits {
    double aspect;   // minor / major axis
    double speckle;  // probability of a dark fleck per pixel
    double scale;    // size relative to major_axis
  };
  // round and plain, oblong and speckled, in-between; then size variants
  constexpr std::array<Traits, 6> kTraits{{
      {1.0, 0.0, 1.0},
      {0.45, 0.25, 1.0},
      {0.7, 0.10, 1.0},
      {1.0, 0.25, 0.7},
      {0.45, 0.0, 0.7},
      {0.7, 0.40, 0.85},
  }};

  const bool shared = options.palette == ToyPalette::shared;
  std::vector<Cutout> out;
  out.reserve(static_cast<std::size_t>(class_count) * per_class);
  for (int c = 0; c < class_count; ++c) {
    const Traits& t = kTraits[static_cast<std::size_t>(c)];
    for (int i = 0; i < per_class; ++i) {
      const double centre = shared ? options.base_hue : options.base_hue + c * options.hue_step;
      const double offset = shared ? options.hue_spread : options.hue_jitter;
      const double hue = std::fmod(std::fmod(centre + rng.uniform(-offset, offset), 360.0) + 360.0, 360.0);
      const double a = std::max(1.0, 0.5 * options.major_axis * t.scale * rng.uniform(0.85, 1.15));
      const double b = std::max(1.0, 0.5 * options.major_axis * t.scale * t.aspect * rng.uniform(0.85, 1.15));
      const int w = static_cast<int>(std::ceil(2 * a)) + 2;
      const int h = static_cast<int>(std::ceil(2 * b)) + 2;
      Image img(w, h);
      std::vector<std::uint8_t> alpha(img.pixel_count(), 0);
      const double cx = w / 2.0, cy = h / 2.0;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double nx = (x + 0.5 - cx) / a, ny = (y + 0.5 - cy) / b;
          const double r2 = nx * nx + ny * ny;
          const bool speckle = rng.bernoulli(t.speckle);
          if (r2 > 1.0) continue;
          // radial shading gives the seeds some volume
          Hsv hsv{hue, options.saturation, options.value * (1.0 - 0.3 * r2) * (speckle ? 0.5 : 1.0)};
          double r, g, bl;
          hsv_to_rgb(hsv, r, g, bl);
          img.set_pixel(x, y, {to_u8(r), to_u8(g), to_u8(bl)});
          alpha[static_cast<std::size_t>(y) * w + x] = 255;
        }
      }
      img.set_alpha(std::move(alpha));
      out.push_back(Cutout{std::move(img), toy_class_name(c), toy_class_name(c) + "/" + std::to_string(i)});
    }
  }
  return out;
}

namespace {

nlohmann::ordered_json placement_json(const Placement& p) {
  nlohmann::ordered_json j;
  j["cutout"] = p.cutout_index;
  j["x"] = p.x;
  j["y"] = p.y;
  j["rotation"] = p.rotation;
  j["width"] = p.width;
  j["height"] = p.height;
  return j;
}

std::string image_name(const std::string& label, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%05d.png", index);
  return label + buf;
}

}  // namespace

DatasetManifest generate_dataset(std::span<const ClassCutouts> cutouts_by_class, const DatasetSpec& spec,
                                 const fs::path& out_dir, std::uint64_t master_seed) {
  if (spec.per_class < 1) throw ConfigError("per_class must be positive");
  if (spec.seeds_per_image < 0) throw ConfigError("seeds_per_image must be non-negative");
  if (spec.canvas < 1) throw ConfigError("canvas size must be positive");
  if (spec.train_fraction < 0 || spec.val_fraction < 0 || std::fabs(spec.train_fraction + spec.val_fraction - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  if (cutouts_by_class.empty()) throw ConfigError("no classes to generate");

  const int n_train = static_cast<int>(std::floor(spec.train_fraction * spec.per_class + 1e-9));
  DatasetManifest manifest;
  manifest.master_seed = master_seed;
  try {
    for (const auto& cls : cutouts_by_class) {
      if (cls.cutouts.empty()) throw ConfigError("class " + cls.class_label + " has no cutouts");
      manifest.class_names.push_back(cls.class_label);
      fs::create_directories(out_dir / "images" / cls.class_label);
    }
  } catch (const fs::filesystem_error& e) {
    throw IoFailure(std::string("cannot create output directory: ") + e.what());
  }

  const std::size_t classes = cutouts_by_class.size();
  const std::size_t total = classes * static_cast<std::size_t>(spec.per_class);
  std::vector<std::string> paths(total);
  std::vector<std::vector<Placement>> placements(total);

  parallel_for(total, spec.threads, [&](std::size_t job) {
    const std::size_t c = job / spec.per_class;
    const int i = static_cast<int>(job % spec.per_class);
    const auto& cls = cutouts_by_class[c];
    Rng rng = Rng::derive(master_seed, {c, static_cast<std::uint64_t>(i)});
    const int shift = spec.background_jitter > 0 ? rng.uniform_int(-spec.background_jitter, spec.background_jitter) : 0;
    Rgb bg;
    for (int ch = 0; ch < 3; ++ch) bg[ch] = to_u8(spec.background[ch] + shift);
    Composition comp = compose_image(cls.cutouts, spec.seeds_per_image, spec.canvas, spec.canvas, bg, spec.compose, rng);
    const std::string rel = "images/" + cls.class_label + "/" + image_name(cls.class_label, i);
    write_png(out_dir / rel, comp.image);
    paths[job] = rel;
    placements[job] = std::move(comp.placements);
  });

  for (std::size_t job = 0; job < total; ++job) {
    const std::size_t c = job / spec.per_class;
    const int i = static_cast<int>(job % spec.per_class);
    manifest.records.push_back(
        ManifestRecord{paths[job], cutouts_by_class[c].class_label, i < n_train ? Split::train : Split::val});
  }
  manifest.validate();
  write_manifest(out_dir / "manifest.jsonl", manifest);

  std::ofstream side(out_dir / "placements.jsonl", std::ios::binary);
  if (!side) throw IoFailure("cannot write placements sidecar in " + out_dir.string());
  for (std::size_t job = 0; job < total; ++job) {
    nlohmann::ordered_json line;
    line["path"] = paths[job];
    line["placements"] = nlohmann::ordered_json::array();
    for (const auto& p : placements[job]) line["placements"].push_back(placement_json(p));
    side << line.dump() << '\n';
  }
  return manifest;
}

std::vector<PlacementRecord> read_placements(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoFailure("cannot open " + file.string());
  std::vector<PlacementRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    PlacementRecord rec{j.at("path").get<std::string>(), {}};
    for (const auto& p : j.at("placements"))
      rec.placements.push_back(Placement{p.at("cutout").get<int>(), p.at("x").get<int>(), p.at("y").get<int>(),
                                         p.at("rotation").get<double>(), p.at("width").get<int>(),
                                         p.at("height").get<int>()});
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace seedcl
