#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seedcl/image.hpp"
#include "seedcl/params.hpp"
#include "seedcl/rng.hpp"
#include "seedcl/tensor.hpp"

namespace seedcl {

enum class EncoderProfile {
  compact,    // small residual CNN, trains on CPU
  reference,  // ResNet-50 layout (bottleneck stages 3-4-6-3), 2048-d features
};

struct EncoderConfig {
  EncoderProfile profile = EncoderProfile::compact;
  int input_size = 32;
  int feature_dim = 128;
  std::vector<int> widths{16, 32, 64};  // compact only; one entry per stage
  int blocks_per_stage = 1;             // compact only
  int group_size = 8;                   // channels per normalization group

  /// ResNet-50 shaped encoder; feature_dim is fixed at 2048.
  static EncoderConfig reference(int input_size = 224);
  /// Throws ConfigError on inconsistent fields.
  void validate() const;
};

enum class HeadKind { simclr_projection, moco_projection, byol_projection, byol_predictor, linear_classifier };

std::string to_string(HeadKind kind);
/// Parameter-name prefix of a head, e.g. "head.projection.".
std::string head_prefix(HeadKind kind);

/// Layer widths of an MLP head including its input width: {in, hidden, out}
/// for projections and predictors (Linear-ReLU-Linear), {in, classes} for the
/// linear classifier. Dims are checked on construction.
class HeadSpec {
 public:
  HeadSpec(HeadKind kind, std::vector<int> layer_dims);

  static HeadSpec projection(HeadKind kind, int in, int hidden, int out) { return HeadSpec(kind, {in, hidden, out}); }
  static HeadSpec classifier(int in, int classes) { return HeadSpec(HeadKind::linear_classifier, {in, classes}); }

  HeadKind kind() const noexcept { return kind_; }
  const std::vector<int>& layer_dims() const noexcept { return dims_; }
  int input_dim() const noexcept { return dims_.front(); }
  int output_dim() const noexcept { return dims_.back(); }
  std::string prefix() const { return head_prefix(kind_); }

 private:
  HeadKind kind_;
  std::vector<int> dims_;
};

namespace detail {

enum class OpKind { conv, norm, relu, max_pool, add };

// One step of the encoder program. Registers are single-assignment: op i
// writes register i + 1, register 0 is the input image batch.
struct EncoderOp {
  OpKind kind = OpKind::conv;
  int src = 0;
  int src2 = -1;  // second operand of add
  std::string weight;  // conv weight or norm scale
  std::string bias;    // norm shift
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

}  // namespace detail

template <typename Real>
struct EncoderTape {
  std::vector<Activation<Real>> registers;
  std::vector<std::vector<Real>> norm_xhat;     // per op; empty for non-norm ops
  std::vector<std::vector<Real>> norm_inv_std;  // per op, one value per (sample, group)
  std::vector<std::vector<std::int32_t>> pool_argmax;
  Matrix<Real> pooled;  // B x C after global average pooling
};

template <typename Real>
struct MlpTape {
  std::vector<Matrix<Real>> inputs;  // input of each linear layer
};

/// Residual CNN with group normalization. Parameters live in a ParamStore
/// under "encoder."; the encoder object only holds the architecture.
template <typename Real>
class Encoder {
 public:
  explicit Encoder(EncoderConfig config);

  const EncoderConfig& config() const noexcept { return config_; }
  int feature_dim() const noexcept { return config_.feature_dim; }
  const std::vector<detail::EncoderOp>& program() const noexcept { return program_; }

  /// Adds every encoder parameter to the store: weights fan-in scaled
  /// uniform, biases and norm shifts zero, norm scales one.
  void init(ParamStore<Real>& store, Rng& rng) const;

  /// B x feature_dim. When tape is non-null it receives what backward needs.
  Matrix<Real> forward(const ParamStore<Real>& store, const Activation<Real>& input, EncoderTape<Real>* tape) const;

  /// Accumulates gradients of trainable entries into grads; frozen entries
  /// are left untouched.
  void backward(const ParamStore<Real>& store, const EncoderTape<Real>& tape, const Matrix<Real>& grad_features,
                ParamStore<Real>& grads) const;

 private:
  EncoderConfig config_;
  std::vector<detail::EncoderOp> program_;
  int final_channels_ = 0;
  bool has_embed_ = false;
};

/// Fully connected head: Linear layers with ReLU between them, none after the
/// last.
template <typename Real>
class Mlp {
 public:
  explicit Mlp(HeadSpec spec) : spec_(std::move(spec)) {}

  const HeadSpec& spec() const noexcept { return spec_; }
  void init(ParamStore<Real>& store, Rng& rng) const;
  Matrix<Real> forward(const ParamStore<Real>& store, const Matrix<Real>& input, MlpTape<Real>* tape) const;
  /// Returns the gradient with respect to the input.
  Matrix<Real> backward(const ParamStore<Real>& store, const MlpTape<Real>& tape, const Matrix<Real>& grad_output,
                        ParamStore<Real>& grads) const;

  std::string weight_name(std::size_t layer) const;
  std::string bias_name(std::size_t layer) const;

 private:
  HeadSpec spec_;
};

/// Pixels scaled to [-1, 1]. Throws ShapeMismatch unless every image is
/// input_size x input_size.
template <typename Real>
Activation<Real> images_to_input(std::span<const Image> batch, int input_size);

template <typename Real>
ParamStore<Real> init_params(const EncoderConfig& config, std::span<const HeadSpec> heads, Rng& rng);

template <typename Real>
Matrix<Real> encode(const ParamStore<Real>& params, const EncoderConfig& config, std::span<const Image> batch);

template <typename Real>
Matrix<Real> apply_head(const ParamStore<Real>& params, const HeadSpec& spec, const Matrix<Real>& features);

/// Drops the head's entries and marks everything left under "encoder." as
/// frozen. Throws UnknownHead when the store holds no such head.
template <typename Real>
ParamStore<Real> strip_head_and_freeze(ParamStore<Real> params, HeadKind kind);

}  // namespace seedcl
