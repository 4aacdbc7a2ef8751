#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seedcl/augment.hpp"
#include "seedcl/image.hpp"
#include "seedcl/net.hpp"
#include "seedcl/params.hpp"

namespace seedcl {

enum class Framework { simclr, moco, byol };

std::string_view to_string(Framework f) noexcept;
/// Throws ConfigError on an unknown name.
Framework parse_framework(std::string_view name);

struct FrameworkConfig {
  Framework framework = Framework::simclr;
  double temperature = 0.5;
  double momentum = 0.999;
  int queue_capacity = 256;
  double ema_decay = 0.99;
  bool symmetrize_byol = false;
  // BYOL target starts as a copy of the online network instead of an
  // independent random initialization.
  bool target_from_online = false;
  std::vector<int> projection_dims{128, 128, 64};  // {in, hidden, out}
  std::vector<int> predictor_dims{64, 256, 64};    // BYOL only

  /// Head sizes of the full-scale setup on a 2048-d encoder.
  static FrameworkConfig reference(Framework f);
  /// Head sizes for the compact encoder with the given feature width. MoCo
  /// runs with temperature 0.2 and momentum 0.99 at this scale.
  static FrameworkConfig desk(Framework f, int feature_dim = 128);

  HeadSpec projection_spec() const;
  HeadSpec predictor_spec() const;
  /// Throws ConfigError when a field is out of range or the heads do not
  /// fit the encoder.
  void validate(int batch_size, int feature_dim) const;
};

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 192;
  std::uint64_t seed = 0;
  int threads = 1;  // augmentation workers

  void validate(Framework f) const;
};

// Objectives. Each evaluates the loss for one batch and, when grads is
// non-null, accumulates gradients of the trainable entries of the
// differentiated store into it.

/// views holds 2N samples; samples 2i and 2i+1 are the two views of image i.
template <typename Real>
Real simclr_objective(const ParamStore<Real>& params, const Encoder<Real>& encoder, const Mlp<Real>& projection,
                      const Activation<Real>& views, Real temperature, ParamStore<Real>* grads);

template <typename Real>
struct MocoOutput {
  Real loss = 0;
  Matrix<Real> keys;  // key projections of key_views, not normalized
};

/// Queries come from query_params, keys from key_params; only query_params
/// receive gradients. With no negatives, the batch's own keys serve as
/// negatives with each query's own key left out.
template <typename Real>
MocoOutput<Real> moco_objective(const ParamStore<Real>& query_params, const ParamStore<Real>& key_params,
                                const Encoder<Real>& encoder, const Mlp<Real>& projection,
                                const Activation<Real>& query_views, const Activation<Real>& key_views,
                                const Matrix<Real>* negatives, Real temperature, ParamStore<Real>* grads);

/// Target projection of view_a against the online prediction of view_b, plus
/// the swapped term when symmetrize is set. Only online_params receive
/// gradients.
template <typename Real>
Real byol_objective(const ParamStore<Real>& online_params, const ParamStore<Real>& target_params,
                    const Encoder<Real>& encoder, const Mlp<Real>& projection, const Mlp<Real>& predictor,
                    const Activation<Real>& view_a, const Activation<Real>& view_b, bool symmetrize,
                    ParamStore<Real>* grads);

/// Softmax cross entropy of a classifier head on top of the encoder. Frozen
/// encoder entries receive no gradient.
template <typename Real>
Real classifier_objective(const ParamStore<Real>& params, const Encoder<Real>& encoder, const Mlp<Real>& classifier,
                          const Activation<Real>& input, std::span<const int> labels, ParamStore<Real>* grads);

struct StepLoss {
  int epoch = 0;  // 1-based
  int step = 0;   // 0-based within the epoch
  double loss = 0.0;
};

struct PretrainResult {
  ParamStore<float> params;  // encoder plus the framework's trainable heads
  std::vector<StepLoss> steps;
  std::vector<double> epoch_means;
  int steps_per_epoch = 0;
  int batch_size = 0;        // effective, min(batch_size, image count)
  std::size_t queue_size = 0;  // MoCo only
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Self-supervised pretraining on unlabeled images. Batches are drawn from a
/// per-epoch shuffle without replacement, the incomplete last batch is
/// dropped. Views of the sample at each (epoch, position) come from their
/// own derived stream, so the loss log does not depend on train.threads.
/// Throws NumericFailure naming the step on a non-finite loss.
PretrainResult pretrain(const FrameworkConfig& framework, const TrainConfig& train, std::span<const Image> images,
                        const AugmentationPolicy& policy, const EncoderConfig& encoder,
                        const EpochCallback& on_epoch = {});

/// Heads that pretrain leaves in its parameter store for the framework.
std::vector<HeadKind> framework_heads(Framework f);

/// Removes every head of the framework and freezes the encoder.
ParamStore<float> strip_framework_heads(ParamStore<float> params, Framework f);

}  // namespace seedcl
