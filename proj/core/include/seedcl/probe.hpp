#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "seedcl/image.hpp"
#include "seedcl/manifest.hpp"
#include "seedcl/net.hpp"
#include "seedcl/params.hpp"
#include "seedcl/rng.hpp"

namespace seedcl {

struct ProbeSplit {
  std::vector<ManifestRecord> train_records;
  std::vector<ManifestRecord> val_records;
  double label_fraction = 0.0;
};

/// Per class, ceil(fraction * n) train-split records without replacement,
/// where n is the smallest per-class train count so every class gets the
/// same number. The first per_class_val drawn go to probe-val. Throws
/// InsufficientData when a class cannot supply them.
ProbeSplit split_labels(const DatasetManifest& manifest, double label_fraction, int per_class_val, Rng& rng);

/// Same draw with an absolute count per class.
ProbeSplit split_labels_per_class(const DatasetManifest& manifest, int per_class, int per_class_val, Rng& rng);

struct LrFindOptions {
  double min_lr = 1e-6;
  double max_lr = 1.0;
  int steps = 100;
  double smoothing = 0.98;         // EMA factor on the loss
  double divergence_factor = 4.0;  // smoothed loss above this times the best stops the search
};

struct LrSweepRow {
  double lr = 0.0;
  double loss = 0.0;
  double smoothed_loss = 0.0;
};

struct LrFindResult {
  std::vector<LrSweepRow> sweep;
  double suggested_lr = 0.0;
  int divergence_index = -1;  // first diverged row, -1 when none
};

/// Runs one optimization step at the given learning rate and returns the
/// loss measured on that step.
using LrStepFunction = std::function<double(double lr)>;

/// Geometric sweep from min_lr to max_lr, one step per value. The suggestion
/// is the rate at the steepest descent of the bias-corrected smoothed loss,
/// taken only from rows before the divergence point and after the first
/// tenth of the sweep. Throws ConfigError on
/// a bad range and AllDiverged when the loss never decreases.
LrFindResult lr_find(const LrStepFunction& step, const LrFindOptions& options = {});

struct ProbeConfig {
  int epochs = 100;
  std::optional<double> learning_rate;  // empty: choose with lr_find
  double fallback_learning_rate = 1e-3;
  int batch_size = 32;
  std::uint64_t seed = 0;
  // Train encoder and classifier together instead of a frozen encoder.
  bool end_to_end = false;
  double weight_decay = 0.0;
  LrFindOptions lr_find{1e-5, 1.0, 50};

  void validate() const;
};

struct ProbeEpoch {
  int epoch = 0;
  double train_accuracy = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
};

struct ProbeResult {
  ParamStore<float> classifier;  // head.classifier.* entries
  ParamStore<float> encoder;     // only differs from the input in end-to-end mode
  std::vector<ProbeEpoch> curve;
  double learning_rate = 0.0;
  std::optional<LrFindResult> lr_sweep;
};

struct LabeledFeatures {
  Matrix<float> features;  // one row per sample
  std::vector<int> labels;
};

/// Linear classifier on fixed feature rows. An empty val set records zero
/// accuracy and loss for it. When initial is given its classifier entries
/// are the starting point and must have shape (class_count, feature_dim);
/// otherwise ShapeMismatch.
ProbeResult train_linear_probe(const LabeledFeatures& train, const LabeledFeatures& val, int class_count,
                               const ProbeConfig& config, const ParamStore<float>* initial = nullptr);

/// Probe on a stripped encoder: encoder entries must all be frozen unless
/// config.end_to_end is set (ConfigError otherwise). In frozen mode features
/// are computed once and cached; the returned encoder is the input.
ProbeResult train_probe(const ParamStore<float>& encoder_params, const EncoderConfig& encoder,
                        std::span<const Image> train_images, std::span<const int> train_labels,
                        std::span<const Image> val_images, std::span<const int> val_labels, int class_count,
                        const ProbeConfig& config);

/// lr_find on a freshly initialized classifier over fixed features.
LrFindResult probe_lr_find(const LabeledFeatures& data, int class_count, const LrFindOptions& options,
                           std::uint64_t seed, int batch_size = 32);

struct Prediction {
  std::vector<int> labels;
  Matrix<float> logits;
};

Prediction predict(const ParamStore<float>& encoder_params, const EncoderConfig& encoder,
                   const ParamStore<float>& classifier, std::span<const Image> images);
Prediction predict_features(const ParamStore<float>& classifier, const Matrix<float>& features);

/// Images of the given records, read relative to the manifest's directory and
/// resized to size x size when they differ.
std::vector<Image> load_images(const std::filesystem::path& manifest_dir, std::span<const ManifestRecord> records,
                               int size, int threads = 1);
/// Class indices of the records; throws UnknownLabel on a foreign label.
std::vector<int> record_labels(const DatasetManifest& manifest, std::span<const ManifestRecord> records);

void write_probe_curve_csv(const std::filesystem::path& file, std::span<const ProbeEpoch> curve);
void write_lr_sweep_csv(const std::filesystem::path& file, std::span<const LrSweepRow> sweep);

}  // namespace seedcl
