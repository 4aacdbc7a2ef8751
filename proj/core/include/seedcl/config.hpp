#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

#include "seedcl/augment.hpp"
#include "seedcl/contrastive.hpp"
#include "seedcl/net.hpp"
#include "seedcl/probe.hpp"

namespace seedcl {

enum class Profile { desk, reference };

std::string_view to_string(Profile p) noexcept;
Profile parse_profile(std::string_view name);

struct LabelBudget {
  int per_class = 50;     // labeled records drawn per class
  int per_class_val = 10;  // of which held out for probe validation
  double fraction = 0.0;  // when > 0, overrides per_class with ceil(fraction * n)
};

struct PathsConfig {
  std::string data_dir;
  std::string out_dir;
};

/// Everything a run needs, serialized as one JSON document.
struct RunConfig {
  Profile profile = Profile::desk;
  EncoderConfig encoder;
  FrameworkConfig framework;
  TrainConfig train;
  ProbeConfig probe;
  LabelBudget labels;
  AugmentationPolicy augmentation;
  PathsConfig paths;

  /// 32 px compact encoder, batch 32, 20 epochs, queue 64, BYOL learning rate 3e-4.
  static RunConfig desk(Framework f);
  /// 224 px ResNet-50 layout, batch 192, 50 epochs, queue 256.
  static RunConfig reference(Framework f);

  /// Throws ConfigError when sections disagree, e.g. head input width versus
  /// encoder feature_dim.
  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& config);

/// Starts from the profile named in the document (desk when absent) and the
/// framework named under framework.name (or fallback), then applies every
/// field present. Unknown keys and ill-typed values throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& doc, Framework fallback = Framework::simclr);

RunConfig load_run_config(const std::filesystem::path& file, Framework fallback = Framework::simclr);

}  // namespace seedcl
