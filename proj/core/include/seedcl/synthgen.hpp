#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "seedcl/image.hpp"
#include "seedcl/manifest.hpp"
#include "seedcl/rng.hpp"

namespace seedcl {

/// A single segmented seed with its mask.
struct Cutout {
  Image image;  // always carries alpha with at least one non-zero entry
  std::string class_label;
  std::string source_id;
};

struct ThresholdConfig {
  // Photos whose luminance range is below this are treated as empty.
  int min_contrast = 16;
  // Overrides the Otsu threshold when set; foreground is luminance <= threshold.
  std::optional<int> fixed_threshold;
  // Largest component above this fraction of the photo is rejected.
  double max_coverage = 0.9;
  // Transparent margin kept around the component's bounding box.
  int padding = 0;
};

/// Segments one dark object on a bright background: global Otsu threshold on
/// luminance, then the largest 8-connected foreground component. The cutout
/// is cropped to the component's bounding box.
Cutout extract_cutout(const Image& photo, std::string class_label, std::string source_id,
                      const ThresholdConfig& config = {});
std::vector<Cutout> extract_cutouts(std::span<const Image> photos, const std::string& class_label,
                                    const ThresholdConfig& config = {});

/// Otsu threshold of a 256-bin histogram; class 0 is values <= threshold.
int otsu_threshold(std::span<const std::uint64_t, 256> histogram);

struct Placement {
  int cutout_index = 0;
  int x = 0;  // top-left of the rotated footprint
  int y = 0;
  double rotation = 0.0;  // degrees, [0, 360)
  int width = 0;          // rotated footprint size
  int height = 0;

  friend bool operator==(const Placement&, const Placement&) = default;
};

using Background = std::variant<Rgb, Image>;

struct ComposeOptions {
  bool rotate = true;
  bool allow_overlap = true;
  int max_retries = 100;  // per instance, only used when overlap is disallowed
};

struct Composition {
  Image image;
  std::vector<Placement> placements;  // draw order
};

/// Rotates an RGBA cutout about its centre with bilinear resampling of
/// premultiplied colour. The result is sized to the rotated bounding box;
/// 0 degrees returns the input unchanged.
Image rotate_cutout(const Image& cutout, double degrees);

/// Alpha-blends `count` instances drawn with replacement from `cutouts`.
Composition compose_image(std::span<const Cutout> cutouts, int count, int canvas_width, int canvas_height,
                          const Background& background, const ComposeOptions& options, Rng& rng);

enum class ToyPalette {
  separated,  // class c centred on base_hue + c * hue_step
  shared,     // every class draws from base_hue +- hue_spread
};

struct ToyCutoutOptions {
  int major_axis = 20;  // pixels, before the per-instance jitter
  double saturation = 0.55;
  double value = 0.70;
  ToyPalette palette = ToyPalette::separated;
  double base_hue = 30.0;    // degrees
  double hue_step = 60.0;    // separated: spacing between class hues
  double hue_jitter = 10.0;  // separated: per-instance offset
  double hue_spread = 60.0;  // shared: per-instance offset
};

/// Procedural seeds: shaded ellipses whose eccentricity, speckle density and
/// size depend on the class (at most 6 classes). With the shared palette,
/// color alone does not identify a class.
std::vector<Cutout> generate_toy_cutouts(int class_count, int per_class, Rng& rng,
                                         const ToyCutoutOptions& options = {});

ToyPalette parse_toy_palette(std::string_view name);

std::string toy_class_name(int class_index);

struct DatasetSpec {
  int per_class = 1000;
  int seeds_per_image = 50;
  int canvas = 224;
  double train_fraction = 0.8;
  double val_fraction = 0.2;
  ComposeOptions compose;
  Rgb background{220, 220, 220};
  int background_jitter = 5;
  int threads = 1;
};

struct ClassCutouts {
  std::string class_label;
  std::vector<Cutout> cutouts;
};

/// Writes per_class PNGs per class under out_dir/images/<class>/ plus
/// out_dir/manifest.jsonl and out_dir/placements.jsonl. Image (c, i) draws
/// from Rng::derive(master_seed, {c, i}), so results do not depend on
/// spec.threads.
DatasetManifest generate_dataset(std::span<const ClassCutouts> cutouts_by_class, const DatasetSpec& spec,
                                 const std::filesystem::path& out_dir, std::uint64_t master_seed);

struct PlacementRecord {
  std::string path;
  std::vector<Placement> placements;
};
std::vector<PlacementRecord> read_placements(const std::filesystem::path& file);

}  // namespace seedcl
