#include "seedcl/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "seedcl/error.hpp"

namespace seedcl {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Profile p) noexcept { return p == Profile::desk ? "desk" : "reference"; }

Profile parse_profile(std::string_view name) {
  if (name == "desk") return Profile::desk;
  if (name == "reference") return Profile::reference;
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected desk or reference)");
}

RunConfig RunConfig::desk(Framework f) {
  RunConfig c;
  c.profile = Profile::desk;
  c.encoder = EncoderConfig{};
  c.framework = FrameworkConfig::desk(f, c.encoder.feature_dim);
  c.train.epochs = 20;
  c.train.batch_size = 32;
  if (f == Framework::byol) c.train.learning_rate = 3e-4;
  c.augmentation.output_size = c.encoder.input_size;
  c.augmentation.crop_scale_min = 0.5;
  c.augmentation.jitter = {0.4, 0.4, 0.4, 18.0};
  c.probe.epochs = 100;
  c.probe.batch_size = 32;
  c.labels = {10, 2, 0.0};
  return c;
}

RunConfig RunConfig::reference(Framework f) {
  RunConfig c;
  c.profile = Profile::reference;
  c.encoder = EncoderConfig::reference(224);
  c.framework = FrameworkConfig::reference(f);
  c.train.epochs = 50;
  c.train.batch_size = 192;
  c.augmentation.output_size = 224;
  c.probe.epochs = 100;
  c.labels = {50, 10, 0.0};
  return c;
}

void RunConfig::validate() const {
  encoder.validate();
  augmentation.validate();
  train.validate(framework.framework);
  probe.validate();
  framework.validate(train.batch_size, encoder.feature_dim);
  if (augmentation.output_size != encoder.input_size)
    throw ConfigError("augmentation.output_size must equal encoder.input_size");
  if (labels.per_class <= 0 && labels.fraction <= 0.0) throw ConfigError("probe needs a positive label budget");
  if (labels.per_class_val < 0) throw ConfigError("probe per_class_val must be non-negative");
  if (labels.fraction < 0.0 || labels.fraction > 1.0) throw ConfigError("probe label fraction must lie in [0, 1]");
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["profile"] = to_string(c.profile);
  j["encoder"] = {{"profile", c.encoder.profile == EncoderProfile::compact ? "compact" : "reference"},
                  {"input_size", c.encoder.input_size},
                  {"feature_dim", c.encoder.feature_dim},
                  {"widths", c.encoder.widths},
                  {"blocks_per_stage", c.encoder.blocks_per_stage},
                  {"group_size", c.encoder.group_size}};
  j["framework"] = {{"name", to_string(c.framework.framework)},
                    {"temperature", c.framework.temperature},
                    {"momentum", c.framework.momentum},
                    {"queue_capacity", c.framework.queue_capacity},
                    {"ema_decay", c.framework.ema_decay},
                    {"symmetrize_byol", c.framework.symmetrize_byol},
                    {"target_from_online", c.framework.target_from_online},
                    {"projection_dims", c.framework.projection_dims},
                    {"predictor_dims", c.framework.predictor_dims}};
  j["train"] = {{"epochs", c.train.epochs},
                {"learning_rate", c.train.learning_rate},
                {"weight_decay", c.train.weight_decay},
                {"batch_size", c.train.batch_size},
                {"seed", c.train.seed}};
  ordered_json probe = {{"epochs", c.probe.epochs}};
  if (c.probe.learning_rate)
    probe["learning_rate"] = *c.probe.learning_rate;
  else
    probe["learning_rate"] = "auto";
  probe["fallback_learning_rate"] = c.probe.fallback_learning_rate;
  probe["batch_size"] = c.probe.batch_size;
  probe["seed"] = c.probe.seed;
  probe["end_to_end"] = c.probe.end_to_end;
  probe["weight_decay"] = c.probe.weight_decay;
  probe["lr_find"] = {{"min_lr", c.probe.lr_find.min_lr},
                      {"max_lr", c.probe.lr_find.max_lr},
                      {"steps", c.probe.lr_find.steps},
                      {"smoothing", c.probe.lr_find.smoothing},
                      {"divergence_factor", c.probe.lr_find.divergence_factor}};
  probe["per_class"] = c.labels.per_class;
  probe["per_class_val"] = c.labels.per_class_val;
  probe["label_fraction"] = c.labels.fraction;
  j["probe"] = std::move(probe);
  j["augmentation"] = {{"crop_scale_min", c.augmentation.crop_scale_min},
                       {"crop_scale_max", c.augmentation.crop_scale_max},
                       {"flip_probability", c.augmentation.flip_probability},
                       {"brightness", c.augmentation.jitter.brightness},
                       {"contrast", c.augmentation.jitter.contrast},
                       {"saturation", c.augmentation.jitter.saturation},
                       {"hue", c.augmentation.jitter.hue},
                       {"grayscale_probability", c.augmentation.grayscale_probability},
                       {"output_size", c.augmentation.output_size}};
  j["paths"] = {{"data_dir", c.paths.data_dir}, {"out_dir", c.paths.out_dir}};
  return j;
}

namespace {

using Setter = std::function<void(const json&)>;

void apply_section(const json& doc, std::string_view section, const std::map<std::string, Setter, std::less<>>& setters) {
  if (!doc.is_object()) throw ConfigError("config section '" + std::string(section) + "' must be an object");
  for (const auto& [key, value] : doc.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + std::string(section) + "." + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + std::string(section) + "." + key + "': " + e.what());
    }
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

}  // namespace

RunConfig run_config_from_json(const json& doc, Framework fallback) {
  if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
  Profile profile = Profile::desk;
  Framework framework = fallback;
  try {
    if (doc.contains("profile")) profile = parse_profile(doc.at("profile").get<std::string>());
    if (doc.contains("framework") && doc.at("framework").contains("name"))
      framework = parse_framework(doc.at("framework").at("name").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad profile or framework name: ") + e.what());
  }
  RunConfig c = profile == Profile::desk ? RunConfig::desk(framework) : RunConfig::reference(framework);

  std::map<std::string, Setter, std::less<>> top;
  top["profile"] = [](const json&) {};
  top["encoder"] = [&](const json& v) {
    apply_section(v, "encoder",
                  {{"profile",
                    [&](const json& s) {
                      const auto name = s.get<std::string>();
                      if (name == "compact")
                        c.encoder.profile = EncoderProfile::compact;
                      else if (name == "reference")
                        c.encoder.profile = EncoderProfile::reference;
                      else
                        throw ConfigError("unknown encoder profile '" + name + "'");
                    }},
                   {"input_size", set(c.encoder.input_size)},
                   {"feature_dim", set(c.encoder.feature_dim)},
                   {"widths", set(c.encoder.widths)},
                   {"blocks_per_stage", set(c.encoder.blocks_per_stage)},
                   {"group_size", set(c.encoder.group_size)}});
  };
  top["framework"] = [&](const json& v) {
    apply_section(v, "framework",
                  {{"name", [](const json&) {}},
                   {"temperature", set(c.framework.temperature)},
                   {"momentum", set(c.framework.momentum)},
                   {"queue_capacity", set(c.framework.queue_capacity)},
                   {"ema_decay", set(c.framework.ema_decay)},
                   {"symmetrize_byol", set(c.framework.symmetrize_byol)},
                   {"target_from_online", set(c.framework.target_from_online)},
                   {"projection_dims", set(c.framework.projection_dims)},
                   {"predictor_dims", set(c.framework.predictor_dims)}});
  };
  top["train"] = [&](const json& v) {
    apply_section(v, "train",
                  {{"epochs", set(c.train.epochs)},
                   {"learning_rate", set(c.train.learning_rate)},
                   {"weight_decay", set(c.train.weight_decay)},
                   {"batch_size", set(c.train.batch_size)},
                   {"seed", set(c.train.seed)}});
  };
  top["probe"] = [&](const json& v) {
    apply_section(
        v, "probe",
        {{"epochs", set(c.probe.epochs)},
         {"learning_rate",
          [&](const json& s) {
            if (s.is_string()) {
              if (s.get<std::string>() != "auto") throw ConfigError("probe.learning_rate must be a number or \"auto\"");
              c.probe.learning_rate.reset();
            } else {
              c.probe.learning_rate = s.get<double>();
            }
          }},
         {"fallback_learning_rate", set(c.probe.fallback_learning_rate)},
         {"batch_size", set(c.probe.batch_size)},
         {"seed", set(c.probe.seed)},
         {"end_to_end", set(c.probe.end_to_end)},
         {"weight_decay", set(c.probe.weight_decay)},
         {"lr_find",
          [&](const json& s) {
            apply_section(s, "probe.lr_find",
                          {{"min_lr", set(c.probe.lr_find.min_lr)},
                           {"max_lr", set(c.probe.lr_find.max_lr)},
                           {"steps", set(c.probe.lr_find.steps)},
                           {"smoothing", set(c.probe.lr_find.smoothing)},
                           {"divergence_factor", set(c.probe.lr_find.divergence_factor)}});
          }},
         {"per_class", set(c.labels.per_class)},
         {"per_class_val", set(c.labels.per_class_val)},
         {"label_fraction", set(c.labels.fraction)}});
  };
  top["augmentation"] = [&](const json& v) {
    auto& a = c.augmentation;
    apply_section(v, "augmentation",
                  {{"crop_scale_min", set(a.crop_scale_min)},
                   {"crop_scale_max", set(a.crop_scale_max)},
                   {"flip_probability", set(a.flip_probability)},
                   {"brightness", set(a.jitter.brightness)},
                   {"contrast", set(a.jitter.contrast)},
                   {"saturation", set(a.jitter.saturation)},
                   {"hue", set(a.jitter.hue)},
                   {"grayscale_probability", set(a.grayscale_probability)},
                   {"output_size", set(a.output_size)}});
  };
  top["paths"] = [&](const json& v) {
    apply_section(v, "paths", {{"data_dir", set(c.paths.data_dir)}, {"out_dir", set(c.paths.out_dir)}});
  };
  apply_section(doc, "config", top);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file, Framework fallback) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + file.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(doc, fallback);
}

}  // namespace seedcl
