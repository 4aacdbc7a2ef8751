#include "seedcl/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "seedcl/contrastive.hpp"
#include "seedcl/csv.hpp"
#include "seedcl/error.hpp"
#include "seedcl/losses.hpp"
#include "seedcl/optimizer.hpp"
#include "seedcl/parallel.hpp"

namespace seedcl {

namespace {

std::vector<std::vector<ManifestRecord>> train_records_by_class(const DatasetManifest& manifest) {
  std::vector<std::vector<ManifestRecord>> by_class(manifest.class_names.size());
  for (const auto& r : manifest.records) {
    if (r.split != Split::train) continue;
    const int c = manifest.class_index(r.class_label);
    if (c < 0) throw UnknownLabel("record " + r.path + " has unknown class " + r.class_label);
    by_class[static_cast<std::size_t>(c)].push_back(r);
  }
  return by_class;
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

}  // namespace

ProbeSplit split_labels_per_class(const DatasetManifest& manifest, int per_class, int per_class_val, Rng& rng) {
  if (per_class <= 0) throw ConfigError("per-class label count must be positive");
  if (per_class_val < 0 || per_class_val > per_class)
    throw ConfigError("per_class_val must lie in [0, per_class]");
  if (manifest.class_names.empty()) throw InsufficientData("manifest has no classes");
  const auto by_class = train_records_by_class(manifest);
  ProbeSplit split;
  std::size_t train_total = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& pool = by_class[c];
    train_total += pool.size();
    if (pool.size() < static_cast<std::size_t>(per_class))
      throw InsufficientData("class " + manifest.class_names[c] + " has " + std::to_string(pool.size()) +
                             " train records, " + std::to_string(per_class) + " requested");
    const auto order = permutation(pool.size(), rng);
    for (int i = 0; i < per_class; ++i) {
      auto& dest = i < per_class_val ? split.val_records : split.train_records;
      dest.push_back(pool[order[static_cast<std::size_t>(i)]]);
    }
  }
  split.label_fraction = train_total ? static_cast<double>(per_class) * static_cast<double>(by_class.size()) /
                                           static_cast<double>(train_total)
                                     : 0.0;
  return split;
}

ProbeSplit split_labels(const DatasetManifest& manifest, double label_fraction, int per_class_val, Rng& rng) {
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) throw ConfigError("label_fraction must lie in (0, 1]");
  const auto by_class = train_records_by_class(manifest);
  if (by_class.empty()) throw InsufficientData("manifest has no classes");
  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  for (const auto& pool : by_class) smallest = std::min(smallest, pool.size());
  if (smallest == 0) throw InsufficientData("a class has no train records");
  // The small epsilon keeps exact products such as 0.0625 * 800 from rounding up.
  const int per_class = static_cast<int>(std::ceil(label_fraction * static_cast<double>(smallest) - 1e-9));
  auto split = split_labels_per_class(manifest, std::max(per_class, 1), per_class_val, rng);
  split.label_fraction = label_fraction;
  return split;
}

LrFindResult lr_find(const LrStepFunction& step, const LrFindOptions& options) {
  if (!(options.min_lr > 0.0) || !(options.max_lr > options.min_lr))
    throw ConfigError("lr_find needs 0 < min_lr < max_lr");
  if (options.steps < 10) throw ConfigError("lr_find needs at least 10 steps");
  if (!(options.smoothing >= 0.0 && options.smoothing < 1.0)) throw ConfigError("smoothing must lie in [0, 1)");
  if (!(options.divergence_factor > 1.0)) throw ConfigError("divergence_factor must exceed 1");

  LrFindResult result;
  const int n = options.steps;
  const double ratio = options.max_lr / options.min_lr;
  double average = 0.0;
  double best = std::numeric_limits<double>::infinity();
  bool decreased = false;
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < n; ++i) {
    const double lr = i == n - 1 ? options.max_lr : options.min_lr * std::pow(ratio, static_cast<double>(i) / (n - 1));
    const double loss = step(lr);
    average = options.smoothing * average + (1.0 - options.smoothing) * loss;
    const double smoothed = average / (1.0 - std::pow(options.smoothing, i + 1));
    if (i > 0 && loss < previous) decreased = true;
    previous = loss;
    result.sweep.push_back({lr, loss, smoothed});
    if (result.divergence_index < 0) {
      if (!std::isfinite(smoothed) || smoothed > options.divergence_factor * best)
        result.divergence_index = i;
      else
        best = std::min(best, smoothed);
    }
  }
  if (!decreased) throw AllDiverged("loss increased at every learning rate");

  const int end = result.divergence_index < 0 ? n : result.divergence_index;
  // The bias-corrected average is still noisy over the first steps.
  const int first = end > 2 * std::max(1, n / 10) ? std::max(1, n / 10) : 0;
  int steepest = -1;
  double steepest_slope = 0.0;
  for (int i = first; i + 1 < end; ++i) {
    const double slope = result.sweep[i + 1].smoothed_loss - result.sweep[i].smoothed_loss;
    if (slope < steepest_slope) {
      steepest_slope = slope;
      steepest = i;
    }
  }
  if (steepest < 0) throw AllDiverged("smoothed loss never decreased before diverging");
  result.suggested_lr = std::clamp(result.sweep[static_cast<std::size_t>(steepest)].lr, options.min_lr, options.max_lr);
  return result;
}

void ProbeConfig::validate() const {
  if (epochs <= 0) throw ConfigError("probe epochs must be positive");
  if (batch_size <= 0) throw ConfigError("probe batch_size must be positive");
  if (learning_rate && !(*learning_rate > 0.0)) throw ConfigError("probe learning_rate must be positive");
  if (!(fallback_learning_rate > 0.0)) throw ConfigError("fallback learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("probe weight_decay must be non-negative");
}

namespace {

enum StreamTag : std::uint64_t { kInit = 0, kShuffle = 1, kLrFind = 2 };

struct Score {
  double accuracy = 0.0;
  double loss = 0.0;
};

Score score_logits(const Matrix<float>& logits, std::span<const int> labels) {
  if (labels.empty()) return {};
  const auto ce = softmax_cross_entropy(logits.cast<double>().eval(), labels);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index arg = 0;
    logits.row(r).maxCoeff(&arg);
    correct += arg == labels[static_cast<std::size_t>(r)] ? 1 : 0;
  }
  return {static_cast<double>(correct) / static_cast<double>(labels.size()), ce.loss};
}

Matrix<float> gather_rows(const Matrix<float>& m, std::span<const std::size_t> rows) {
  Matrix<float> out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

ParamStore<float> fresh_classifier(int feature_dim, int class_count, std::uint64_t seed) {
  ParamStore<float> store;
  Rng rng = Rng::derive(seed, {kInit});
  Mlp<float>(HeadSpec::classifier(feature_dim, class_count)).init(store, rng);
  return store;
}

void check_labels(std::span<const int> labels, int class_count) {
  for (int y : labels)
    if (y < 0 || y >= class_count) throw UnknownLabel("label index " + std::to_string(y) + " outside the class range");
}

}  // namespace

LrFindResult probe_lr_find(const LabeledFeatures& data, int class_count, const LrFindOptions& options,
                           std::uint64_t seed, int batch_size) {
  if (data.features.rows() == 0) throw InsufficientData("lr_find needs at least one sample");
  if (static_cast<std::size_t>(data.features.rows()) != data.labels.size())
    throw ShapeMismatch("one label per feature row required");
  check_labels(data.labels, class_count);
  const int dim = static_cast<int>(data.features.cols());
  const Mlp<float> head(HeadSpec::classifier(dim, class_count));
  ParamStore<float> params = fresh_classifier(dim, class_count, seed);
  ParamStore<float> grads = params.zeros_like();
  Adam<float> adam(AdamConfig{});
  Rng rng = Rng::derive(seed, {kLrFind});
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  const std::size_t n = static_cast<std::size_t>(data.features.rows());
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(std::max(batch_size, 1)), n);
  return lr_find(
      [&](double lr) {
        if (cursor + bs > order.size()) {
          order = permutation(n, rng);
          cursor = 0;
        }
        const std::span<const std::size_t> rows(order.data() + cursor, bs);
        cursor += bs;
        std::vector<int> labels;
        for (std::size_t r : rows) labels.push_back(data.labels[r]);
        MlpTape<float> tape;
        const Matrix<float> logits = head.forward(params, gather_rows(data.features, rows), &tape);
        const auto ce = softmax_cross_entropy(logits, labels);
        grads.fill(0.0f);
        head.backward(params, tape, ce.grad, grads);
        adam.set_learning_rate(lr);
        adam.step(params, grads);
        return static_cast<double>(ce.loss);
      },
      options);
}

Prediction predict_features(const ParamStore<float>& classifier, const Matrix<float>& features) {
  const auto& w = classifier.at(Mlp<float>(HeadSpec::classifier(1, 1)).weight_name(0));
  if (w.shape.size() != 2) throw ShapeMismatch("classifier weight must be 2-d");
  const Mlp<float> head(HeadSpec::classifier(w.shape[1], w.shape[0]));
  Prediction p;
  p.logits = head.forward(classifier, features, nullptr);
  p.labels.resize(static_cast<std::size_t>(p.logits.rows()));
  for (Eigen::Index r = 0; r < p.logits.rows(); ++r) {
    Eigen::Index arg = 0;
    p.logits.row(r).maxCoeff(&arg);
    p.labels[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  return p;
}

Prediction predict(const ParamStore<float>& encoder_params, const EncoderConfig& encoder,
                   const ParamStore<float>& classifier, std::span<const Image> images) {
  return predict_features(classifier, encode(encoder_params, encoder, images));
}

ProbeResult train_linear_probe(const LabeledFeatures& train, const LabeledFeatures& val, int class_count,
                               const ProbeConfig& config, const ParamStore<float>* initial) {
  config.validate();
  if (class_count <= 0) throw ConfigError("class_count must be positive");
  if (train.features.rows() == 0) throw InsufficientData("probe needs at least one training sample");
  if (static_cast<std::size_t>(train.features.rows()) != train.labels.size() ||
      static_cast<std::size_t>(val.features.rows()) != val.labels.size())
    throw ShapeMismatch("one label per feature row required");
  if (val.features.rows() > 0 && val.features.cols() != train.features.cols())
    throw ShapeMismatch("train and val features differ in width");
  check_labels(train.labels, class_count);
  check_labels(val.labels, class_count);
  const int dim = static_cast<int>(train.features.cols());
  const HeadSpec spec = HeadSpec::classifier(dim, class_count);
  const Mlp<float> head(spec);

  ProbeResult result;
  if (initial) {
    result.classifier = initial->subset(spec.prefix());
    const auto& w = result.classifier.at(head.weight_name(0));
    const auto& b = result.classifier.at(head.bias_name(0));
    if (w.shape != std::vector<int>{class_count, dim} || b.shape != std::vector<int>{class_count})
      throw ShapeMismatch("classifier dims do not match (feature_dim " + std::to_string(dim) + ", classes " +
                          std::to_string(class_count) + ")");
  } else {
    result.classifier = fresh_classifier(dim, class_count, config.seed);
  }

  if (config.learning_rate) {
    result.learning_rate = *config.learning_rate;
  } else {
    try {
      result.lr_sweep = probe_lr_find(train, class_count, config.lr_find, config.seed, config.batch_size);
      result.learning_rate = result.lr_sweep->suggested_lr;
    } catch (const AllDiverged&) {
      result.learning_rate = config.fallback_learning_rate;
    }
  }

  ParamStore<float>& params = result.classifier;
  ParamStore<float> grads = params.zeros_like();
  Adam<float> adam(AdamConfig{.learning_rate = result.learning_rate, .weight_decay = config.weight_decay});
  const std::size_t n = train.labels.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng = Rng::derive(config.seed, {kShuffle, static_cast<std::uint64_t>(epoch)});
    const auto order = permutation(n, rng);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(bs, n - start));
      std::vector<int> labels;
      for (std::size_t r : rows) labels.push_back(train.labels[r]);
      MlpTape<float> tape;
      const Matrix<float> logits = head.forward(params, gather_rows(train.features, rows), &tape);
      const auto ce = softmax_cross_entropy(logits, labels);
      grads.fill(0.0f);
      head.backward(params, tape, ce.grad, grads);
      adam.step(params, grads);
    }
    const Score tr = score_logits(head.forward(params, train.features, nullptr), train.labels);
    Score va;
    if (!val.labels.empty()) va = score_logits(head.forward(params, val.features, nullptr), val.labels);
    result.curve.push_back({epoch, tr.accuracy, tr.loss, va.accuracy, va.loss});
  }
  return result;
}

ProbeResult train_probe(const ParamStore<float>& encoder_params, const EncoderConfig& encoder,
                        std::span<const Image> train_images, std::span<const int> train_labels,
                        std::span<const Image> val_images, std::span<const int> val_labels, int class_count,
                        const ProbeConfig& config) {
  config.validate();
  if (train_images.size() != train_labels.size() || val_images.size() != val_labels.size())
    throw ShapeMismatch("one label per image required");
  if (train_images.empty()) throw InsufficientData("probe needs at least one training image");
  if (encoder_params.count_prefix("head.") != 0)
    throw ConfigError("encoder parameters still carry a head; strip it before probing");

  if (!config.end_to_end) {
    for (const auto& e : encoder_params.entries())
      if (e.trainable) throw ConfigError("encoder entry " + e.name + " is not frozen");
    LabeledFeatures train{encode(encoder_params, encoder, train_images), {train_labels.begin(), train_labels.end()}};
    LabeledFeatures val{val_images.empty() ? Matrix<float>(0, encoder.feature_dim)
                                           : encode(encoder_params, encoder, val_images),
                        {val_labels.begin(), val_labels.end()}};
    auto result = train_linear_probe(train, val, class_count, config);
    result.encoder = encoder_params;
    return result;
  }

  // End-to-end: encoder and classifier trained together on the raw images.
  check_labels(train_labels, class_count);
  check_labels(val_labels, class_count);
  const Encoder<float> net(encoder);
  const HeadSpec spec = HeadSpec::classifier(encoder.feature_dim, class_count);
  const Mlp<float> head(spec);
  ParamStore<float> params = encoder_params;
  params.set_trainable_prefix("encoder.", true);
  params.merge(fresh_classifier(encoder.feature_dim, class_count, config.seed));

  ProbeResult result;
  result.learning_rate = config.learning_rate.value_or(config.fallback_learning_rate);
  ParamStore<float> grads = params.zeros_like();
  Adam<float> adam(AdamConfig{.learning_rate = result.learning_rate, .weight_decay = config.weight_decay});
  const std::size_t n = train_images.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);
  std::vector<Image> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng = Rng::derive(config.seed, {kShuffle, static_cast<std::uint64_t>(epoch)});
    const auto order = permutation(n, rng);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      batch.clear();
      std::vector<int> labels;
      for (std::size_t i = start; i < start + count; ++i) {
        batch.push_back(train_images[order[i]]);
        labels.push_back(train_labels[order[i]]);
      }
      grads.fill(0.0f);
      classifier_objective(params, net, head, images_to_input<float>(batch, encoder.input_size), labels, &grads);
      adam.step(params, grads);
    }
    const auto enc = params.subset("encoder.");
    const auto cls = params.subset(spec.prefix());
    const Score tr = score_logits(predict(enc, encoder, cls, train_images).logits, train_labels);
    Score va;
    if (!val_images.empty()) va = score_logits(predict(enc, encoder, cls, val_images).logits, val_labels);
    result.curve.push_back({epoch, tr.accuracy, tr.loss, va.accuracy, va.loss});
  }
  result.encoder = params.subset("encoder.");
  result.classifier = params.subset(spec.prefix());
  return result;
}

std::vector<Image> load_images(const std::filesystem::path& manifest_dir, std::span<const ManifestRecord> records,
                               int size, int threads) {
  std::vector<Image> images(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    Image img = read_png(manifest_dir / records[i].path);
    if (size > 0 && (img.width() != size || img.height() != size)) img = resize(img, size, size);
    images[i] = std::move(img);
  });
  return images;
}

std::vector<int> record_labels(const DatasetManifest& manifest, std::span<const ManifestRecord> records) {
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) {
    const int c = manifest.class_index(r.class_label);
    if (c < 0) throw UnknownLabel("unknown class " + r.class_label);
    labels.push_back(c);
  }
  return labels;
}

void write_probe_curve_csv(const std::filesystem::path& file, std::span<const ProbeEpoch> curve) {
  TextFile out(file);
  out << "epoch,train_acc,train_loss,val_acc,val_loss\n";
  for (const auto& e : curve)
    out << std::to_string(e.epoch) + "," + format_real(e.train_accuracy) + "," + format_real(e.train_loss) + "," +
               format_real(e.val_accuracy) + "," + format_real(e.val_loss) + "\n";
  out.close();
}

void write_lr_sweep_csv(const std::filesystem::path& file, std::span<const LrSweepRow> sweep) {
  TextFile out(file);
  out << "lr,loss,smoothed_loss\n";
  for (const auto& r : sweep)
    out << format_real(r.lr) + "," + format_real(r.loss) + "," + format_real(r.smoothed_loss) + "\n";
  out.close();
}

}  // namespace seedcl
