#include "seedcl/contrastive.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>
#include <optional>
#include <sstream>

#include "seedcl/error.hpp"
#include "seedcl/key_queue.hpp"
#include "seedcl/losses.hpp"
#include "seedcl/optimizer.hpp"
#include "seedcl/parallel.hpp"
#include "seedcl/rng.hpp"

namespace seedcl {

std::string_view to_string(Framework f) noexcept {
  switch (f) {
    case Framework::simclr: return "simclr";
    case Framework::moco: return "moco";
    case Framework::byol: return "byol";
  }
  return "unknown";
}

Framework parse_framework(std::string_view name) {
  if (name == "simclr") return Framework::simclr;
  if (name == "moco") return Framework::moco;
  if (name == "byol") return Framework::byol;
  throw ConfigError("unknown framework '" + std::string(name) + "' (expected simclr, moco or byol)");
}

FrameworkConfig FrameworkConfig::reference(Framework f) {
  FrameworkConfig c;
  c.framework = f;
  c.queue_capacity = 256;
  if (f == Framework::byol) {
    c.projection_dims = {2048, 4096, 256};
    c.predictor_dims = {256, 4096, 256};
  } else {
    c.projection_dims = {2048, 2048, 128};
    c.predictor_dims = {128, 2048, 128};
  }
  return c;
}

FrameworkConfig FrameworkConfig::desk(Framework f, int feature_dim) {
  FrameworkConfig c;
  c.framework = f;
  c.queue_capacity = 64;
  if (f == Framework::moco) {
    c.temperature = 0.2;
    c.momentum = 0.99;
  }
  if (f == Framework::byol) {
    c.projection_dims = {feature_dim, 256, 64};
    c.predictor_dims = {64, 256, 64};
  } else {
    c.projection_dims = {feature_dim, 128, 64};
    c.predictor_dims = {64, 256, 64};
  }
  return c;
}

namespace {

HeadKind projection_kind(Framework f) {
  switch (f) {
    case Framework::simclr: return HeadKind::simclr_projection;
    case Framework::moco: return HeadKind::moco_projection;
    case Framework::byol: return HeadKind::byol_projection;
  }
  return HeadKind::simclr_projection;
}

}  // namespace

HeadSpec FrameworkConfig::projection_spec() const { return HeadSpec(projection_kind(framework), projection_dims); }
HeadSpec FrameworkConfig::predictor_spec() const { return HeadSpec(HeadKind::byol_predictor, predictor_dims); }

void FrameworkConfig::validate(int batch_size, int feature_dim) const {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("momentum must lie in [0, 1]");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("ema_decay must lie in [0, 1]");
  if (projection_dims.size() != 3) throw ConfigError("projection head needs 3 layer dims");
  for (int d : projection_dims)
    if (d <= 0) throw ConfigError("projection head dims must be positive");
  if (projection_dims.front() != feature_dim)
    throw ConfigError("projection head input " + std::to_string(projection_dims.front()) +
                      " does not match encoder feature_dim " + std::to_string(feature_dim));
  if (framework == Framework::moco) {
    if (queue_capacity <= 0) throw ConfigError("queue_capacity must be positive");
    if (queue_capacity < batch_size)
      throw ConfigError("queue_capacity " + std::to_string(queue_capacity) + " is smaller than the batch size " +
                        std::to_string(batch_size));
  }
  if (framework == Framework::byol) {
    if (predictor_dims.size() != 3) throw ConfigError("predictor head needs 3 layer dims");
    for (int d : predictor_dims)
      if (d <= 0) throw ConfigError("predictor head dims must be positive");
    if (predictor_dims.front() != projection_dims.back() || predictor_dims.back() != projection_dims.back())
      throw ConfigError("predictor must map the projection width onto itself");
  }
}

void TrainConfig::validate(Framework f) const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (f == Framework::simclr && batch_size < 2) throw ConfigError("simclr needs batch_size >= 2");
  if (threads <= 0) throw ConfigError("threads must be positive");
}

template <typename Real>
Real simclr_objective(const ParamStore<Real>& params, const Encoder<Real>& encoder, const Mlp<Real>& projection,
                      const Activation<Real>& views, Real temperature, ParamStore<Real>* grads) {
  EncoderTape<Real> et;
  MlpTape<Real> mt;
  const bool train = grads != nullptr;
  const Matrix<Real> h = encoder.forward(params, views, train ? &et : nullptr);
  const Matrix<Real> z = projection.forward(params, h, train ? &mt : nullptr);
  auto r = nt_xent_loss(z, temperature);
  if (train) encoder.backward(params, et, projection.backward(params, mt, r.grad, *grads), *grads);
  return r.loss;
}

template <typename Real>
MocoOutput<Real> moco_objective(const ParamStore<Real>& query_params, const ParamStore<Real>& key_params,
                                const Encoder<Real>& encoder, const Mlp<Real>& projection,
                                const Activation<Real>& query_views, const Activation<Real>& key_views,
                                const Matrix<Real>* negatives, Real temperature, ParamStore<Real>* grads) {
  MocoOutput<Real> out;
  out.keys = projection.forward(key_params, encoder.forward(key_params, key_views, nullptr), nullptr);
  EncoderTape<Real> et;
  MlpTape<Real> mt;
  const bool train = grads != nullptr;
  const Matrix<Real> h = encoder.forward(query_params, query_views, train ? &et : nullptr);
  const Matrix<Real> q = projection.forward(query_params, h, train ? &mt : nullptr);
  auto r = negatives ? moco_info_nce(q, out.keys, *negatives, temperature)
                     : moco_info_nce(q, out.keys, out.keys, temperature, true);
  if (train) encoder.backward(query_params, et, projection.backward(query_params, mt, r.grad, *grads), *grads);
  out.loss = r.loss;
  return out;
}

namespace {

template <typename Real>
Real byol_term(const ParamStore<Real>& online, const ParamStore<Real>& target, const Encoder<Real>& encoder,
               const Mlp<Real>& projection, const Mlp<Real>& predictor, const Activation<Real>& target_view,
               const Activation<Real>& online_view, ParamStore<Real>* grads) {
  const Matrix<Real> z = projection.forward(target, encoder.forward(target, target_view, nullptr), nullptr);
  EncoderTape<Real> et;
  MlpTape<Real> proj_tape;
  MlpTape<Real> pred_tape;
  const bool train = grads != nullptr;
  const Matrix<Real> h = encoder.forward(online, online_view, train ? &et : nullptr);
  const Matrix<Real> y = projection.forward(online, h, train ? &proj_tape : nullptr);
  const Matrix<Real> p = predictor.forward(online, y, train ? &pred_tape : nullptr);
  auto r = byol_loss(p, z);
  if (train) {
    const Matrix<Real> gy = predictor.backward(online, pred_tape, r.grad, *grads);
    encoder.backward(online, et, projection.backward(online, proj_tape, gy, *grads), *grads);
  }
  return r.loss;
}

}  // namespace

template <typename Real>
Real byol_objective(const ParamStore<Real>& online_params, const ParamStore<Real>& target_params,
                    const Encoder<Real>& encoder, const Mlp<Real>& projection, const Mlp<Real>& predictor,
                    const Activation<Real>& view_a, const Activation<Real>& view_b, bool symmetrize,
                    ParamStore<Real>* grads) {
  Real loss = byol_term(online_params, target_params, encoder, projection, predictor, view_a, view_b, grads);
  if (symmetrize) loss += byol_term(online_params, target_params, encoder, projection, predictor, view_b, view_a, grads);
  return loss;
}

template <typename Real>
Real classifier_objective(const ParamStore<Real>& params, const Encoder<Real>& encoder, const Mlp<Real>& classifier,
                          const Activation<Real>& input, std::span<const int> labels, ParamStore<Real>* grads) {
  EncoderTape<Real> et;
  MlpTape<Real> mt;
  const bool train = grads != nullptr;
  const Matrix<Real> h = encoder.forward(params, input, train ? &et : nullptr);
  const Matrix<Real> logits = classifier.forward(params, h, train ? &mt : nullptr);
  auto r = softmax_cross_entropy(logits, labels);
  if (train) {
    const Matrix<Real> gh = classifier.backward(params, mt, r.grad, *grads);
    bool any_trainable = false;
    for (const auto& e : params.entries())
      if (e.trainable && e.name.starts_with("encoder.")) any_trainable = true;
    if (any_trainable) encoder.backward(params, et, gh, *grads);
  }
  return r.loss;
}

std::vector<HeadKind> framework_heads(Framework f) {
  if (f == Framework::byol) return {HeadKind::byol_projection, HeadKind::byol_predictor};
  return {projection_kind(f)};
}

ParamStore<float> strip_framework_heads(ParamStore<float> params, Framework f) {
  for (HeadKind k : framework_heads(f)) params = strip_head_and_freeze(std::move(params), k);
  return params;
}

namespace {

enum StreamTag : std::uint64_t { kInit = 0, kTargetInit = 1, kShuffle = 2, kViews = 3 };

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

}  // namespace

PretrainResult pretrain(const FrameworkConfig& framework, const TrainConfig& train, std::span<const Image> images,
                        const AugmentationPolicy& policy, const EncoderConfig& encoder_config,
                        const EpochCallback& on_epoch) {
  encoder_config.validate();
  policy.validate();
  train.validate(framework.framework);
  if (images.empty()) throw InsufficientData("pretraining needs at least one image");
  if (policy.output_size != encoder_config.input_size)
    throw ConfigError("augmentation output_size " + std::to_string(policy.output_size) +
                      " differs from encoder input_size " + std::to_string(encoder_config.input_size));
  const int batch = std::min<int>(train.batch_size, static_cast<int>(images.size()));
  if (framework.framework == Framework::simclr && batch < 2)
    throw InsufficientData("simclr needs at least two images per batch");
  framework.validate(batch, encoder_config.feature_dim);

  const Framework kind = framework.framework;
  const Encoder<float> encoder(encoder_config);
  const Mlp<float> projection(framework.projection_spec());
  const Mlp<float> predictor(kind == Framework::byol ? framework.predictor_spec()
                                                     : HeadSpec(HeadKind::byol_predictor, {1, 1, 1}));
  const float tau = static_cast<float>(framework.temperature);

  PretrainResult result;
  {
    std::vector<HeadSpec> heads{framework.projection_spec()};
    if (kind == Framework::byol) heads.push_back(framework.predictor_spec());
    Rng init = Rng::derive(train.seed, {kInit});
    result.params = init_params<float>(encoder_config, heads, init);
  }
  ParamStore<float>& params = result.params;

  // MoCo key network or BYOL target network: encoder plus projection.
  ParamStore<float> shadow;
  if (kind == Framework::moco || (kind == Framework::byol && framework.target_from_online)) {
    shadow = params.subset("encoder.");
    shadow.merge(params.subset(head_prefix(projection_kind(kind))));
  } else if (kind == Framework::byol) {
    Rng target_init = Rng::derive(train.seed, {kTargetInit});
    const HeadSpec spec = framework.projection_spec();
    shadow = init_params<float>(encoder_config, std::span<const HeadSpec>(&spec, 1), target_init);
  }
  std::optional<KeyQueue<float>> queue;
  if (kind == Framework::moco)
    queue.emplace(static_cast<std::size_t>(framework.queue_capacity),
                  static_cast<std::size_t>(framework.projection_dims.back()));

  Adam<float> optimizer(AdamConfig{.learning_rate = train.learning_rate, .weight_decay = train.weight_decay});
  ParamStore<float> grads = params.zeros_like();

  const std::size_t n = images.size();
  const int steps = static_cast<int>(n / static_cast<std::size_t>(batch));
  result.steps_per_epoch = steps;
  result.batch_size = batch;
  std::vector<ViewPair> views(static_cast<std::size_t>(batch));
  std::vector<Image> first(static_cast<std::size_t>(batch));
  std::vector<Image> second(static_cast<std::size_t>(batch));
  std::vector<Image> interleaved(static_cast<std::size_t>(2 * batch));

  for (int epoch = 1; epoch <= train.epochs; ++epoch) {
    Rng shuffle = Rng::derive(train.seed, {kShuffle, static_cast<std::uint64_t>(epoch)});
    const auto order = shuffled_order(n, shuffle);
    double epoch_sum = 0.0;
    for (int step = 0; step < steps; ++step) {
      const std::size_t base = static_cast<std::size_t>(step) * static_cast<std::size_t>(batch);
      parallel_for(static_cast<std::size_t>(batch), train.threads, [&](std::size_t j) {
        Rng rng = Rng::derive(train.seed, {kViews, static_cast<std::uint64_t>(epoch), base + j});
        views[j] = make_views(images[order[base + j]], policy, rng, static_cast<int>(order[base + j]));
      });
      for (std::size_t j = 0; j < views.size(); ++j) {
        first[j] = std::move(views[j].view_a);
        second[j] = std::move(views[j].view_b);
      }
      grads.fill(0.0f);
      float loss = 0.0f;
      Matrix<float> keys;
      const auto where = [&] {
        std::ostringstream msg;
        msg << " at epoch " << epoch << " step " << step << " (global step " << (epoch - 1) * steps + step << ")";
        return msg.str();
      };
      try {
        switch (kind) {
          case Framework::simclr: {
            for (std::size_t j = 0; j < first.size(); ++j) {
              interleaved[2 * j] = first[j];
              interleaved[2 * j + 1] = second[j];
            }
            const auto input = images_to_input<float>(interleaved, encoder_config.input_size);
            loss = simclr_objective(params, encoder, projection, input, tau, &grads);
            break;
          }
          case Framework::moco: {
            const auto q = images_to_input<float>(first, encoder_config.input_size);
            const auto k = images_to_input<float>(second, encoder_config.input_size);
            Matrix<float> negatives;
            if (!queue->empty()) negatives = queue->snapshot();
            auto out = moco_objective(params, shadow, encoder, projection, q, k, queue->empty() ? nullptr : &negatives,
                                      tau, &grads);
            loss = out.loss;
            keys = std::move(out.keys);
            break;
          }
          case Framework::byol: {
            const auto a = images_to_input<float>(first, encoder_config.input_size);
            const auto b = images_to_input<float>(second, encoder_config.input_size);
            loss = byol_objective(params, shadow, encoder, projection, predictor, a, b, framework.symmetrize_byol,
                                  &grads);
            break;
          }
        }
      } catch (const ZeroVector& e) {
        throw NumericFailure(std::string(to_string(kind)) + " embeddings collapsed to zero" + where() + ": " + e.what());
      }
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << to_string(kind) << " loss became " << loss << where();
        throw NumericFailure(msg.str());
      }
      optimizer.step(params, grads);
      if (kind == Framework::moco) {
        momentum_update(shadow, params, framework.momentum);
        queue->push(keys);
      } else if (kind == Framework::byol) {
        ema_update(shadow, params, framework.ema_decay);
      }
      result.steps.push_back({epoch, step, static_cast<double>(loss)});
      epoch_sum += static_cast<double>(loss);
    }
    const double mean = steps > 0 ? epoch_sum / steps : 0.0;
    result.epoch_means.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  if (queue) result.queue_size = queue->size();
  return result;
}

#define SEEDCL_INSTANTIATE(Real)                                                                                   \
  template Real simclr_objective<Real>(const ParamStore<Real>&, const Encoder<Real>&, const Mlp<Real>&,            \
                                       const Activation<Real>&, Real, ParamStore<Real>*);                          \
  template MocoOutput<Real> moco_objective<Real>(const ParamStore<Real>&, const ParamStore<Real>&,                 \
                                                 const Encoder<Real>&, const Mlp<Real>&, const Activation<Real>&,  \
                                                 const Activation<Real>&, const Matrix<Real>*, Real,               \
                                                 ParamStore<Real>*);                                               \
  template Real byol_objective<Real>(const ParamStore<Real>&, const ParamStore<Real>&, const Encoder<Real>&,       \
                                     const Mlp<Real>&, const Mlp<Real>&, const Activation<Real>&,                  \
                                     const Activation<Real>&, bool, ParamStore<Real>*);                            \
  template Real classifier_objective<Real>(const ParamStore<Real>&, const Encoder<Real>&, const Mlp<Real>&,        \
                                           const Activation<Real>&, std::span<const int>, ParamStore<Real>*);

SEEDCL_INSTANTIATE(float)
SEEDCL_INSTANTIATE(double)

#undef SEEDCL_INSTANTIATE

}  // namespace seedcl
