#include <gtest/gtest.h>

#include "seedcl/checkpoint.hpp"
#include "seedcl/contrastive.hpp"
#include "seedcl/error.hpp"
#include "seedcl/gradient_check.hpp"
#include "seedcl/losses.hpp"
#include "seedcl/net.hpp"
#include "support/scratch_dir.hpp"

namespace seedcl {
namespace {

using testing::ScratchDir;
using testing::slurp;

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.input_size = 8;
  c.feature_dim = 12;
  c.widths = {8, 16};
  return c;
}

std::vector<Image> noise_images(int n, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    Image img(size, size);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.below(256));
    out.push_back(std::move(img));
  }
  return out;
}

TEST(InitParams, SameStreamGivesIdenticalStores) {
  const std::vector<HeadSpec> heads{HeadSpec::projection(HeadKind::simclr_projection, 128, 64, 32)};
  Rng a(5), b(5);
  EXPECT_EQ(init_params<float>(EncoderConfig{}, heads, a), init_params<float>(EncoderConfig{}, heads, b));
}

TEST(InitParams, BiasesAndNormShiftsStartAtZero) {
  const std::vector<HeadSpec> heads{HeadSpec::projection(HeadKind::simclr_projection, 128, 64, 32)};
  Rng rng(1);
  const auto store = init_params<float>(EncoderConfig{}, heads, rng);
  int biases = 0;
  for (const auto& e : store.entries()) {
    if (!e.name.ends_with(".bias") && !e.name.ends_with(".beta")) continue;
    ++biases;
    for (float v : e.values) EXPECT_EQ(v, 0.0f) << e.name;
  }
  EXPECT_GT(biases, 0);
}

TEST(InitParams, WeightsAreFanInScaled) {
  Rng rng(2);
  const auto store = init_params<double>(EncoderConfig{}, {}, rng);
  const auto& stem = store.at("encoder.stem.conv.weight");
  const double bound = std::sqrt(6.0 / (3 * 3 * 3));
  for (double v : stem.values) EXPECT_LE(std::fabs(v), bound);
}

TEST(Encode, CompactProfileEmitsFeatureDimColumns) {
  EncoderConfig cfg;
  Rng rng(3);
  const auto params = init_params<float>(cfg, {}, rng);
  const auto batch = noise_images(4, 32, 1);
  const auto f = encode<float>(params, cfg, batch);
  EXPECT_EQ(f.rows(), 4);
  EXPECT_EQ(f.cols(), 128);
  EXPECT_TRUE(f.allFinite());
}

TEST(Encode, DuplicateImagesGiveIdenticalRows) {
  const EncoderConfig cfg = tiny_encoder();
  Rng rng(3);
  const auto params = init_params<double>(cfg, {}, rng);
  auto batch = noise_images(3, 8, 2);
  batch.push_back(batch[1]);
  const auto f = encode<double>(params, cfg, batch);
  EXPECT_EQ(f.row(1), f.row(3));
  EXPECT_EQ(f, encode<double>(params, cfg, batch));
}

TEST(Encode, RowsDoNotDependOnTheRestOfTheBatch) {
  const EncoderConfig cfg = tiny_encoder();
  Rng rng(4);
  const auto params = init_params<double>(cfg, {}, rng);
  const auto batch = noise_images(3, 8, 5);
  const auto all = encode<double>(params, cfg, batch);
  const auto one = encode<double>(params, cfg, std::span<const Image>(batch).subspan(2, 1));
  EXPECT_LT((all.row(2) - one.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encode, WrongImageSizeIsAShapeMismatch) {
  const EncoderConfig cfg = tiny_encoder();
  Rng rng(3);
  const auto params = init_params<float>(cfg, {}, rng);
  const auto batch = noise_images(2, 9, 1);
  EXPECT_THROW(encode<float>(params, cfg, batch), ShapeMismatch);
}

TEST(Encode, WeightPerturbationMatchesTheJacobianVectorProduct) {
  const EncoderConfig cfg = tiny_encoder();
  Rng rng(11);
  const auto params = init_params<double>(cfg, {}, rng);
  const auto batch = noise_images(2, 8, 9);
  const Encoder<double> enc(cfg);
  const auto input = images_to_input<double>(batch, cfg.input_size);
  Matrix<double> u(2, cfg.feature_dim);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.uniform(-1, 1);
  const LossFunction probe = [&](const ParamStore<double>& p, ParamStore<double>* grads) {
    EncoderTape<double> tape;
    const auto f = enc.forward(p, input, grads ? &tape : nullptr);
    if (grads) enc.backward(p, tape, u, *grads);
    return (f.array() * u.array()).sum();
  };
  Rng pick(2);
  const auto report = gradient_check(probe, params, pick, GradientCheckOptions{.samples = 200});
  EXPECT_EQ(report.checked, 200u);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_parameter;
}

TEST(ApplyHead, ClassifierEmitsOneLogitPerClass) {
  const HeadSpec spec = HeadSpec::classifier(12, 5);
  Rng rng(1);
  ParamStore<float> store;
  Mlp<float>(spec).init(store, rng);
  const Matrix<float> x = Matrix<float>::Random(7, 12);
  const auto logits = apply_head<float>(store, spec, x);
  EXPECT_EQ(logits.rows(), 7);
  EXPECT_EQ(logits.cols(), 5);
}

TEST(ApplyHead, ZeroInputThroughZeroBiasHeadIsZero) {
  const HeadSpec spec = HeadSpec::projection(HeadKind::simclr_projection, 6, 10, 4);
  Rng rng(1);
  ParamStore<double> store;
  Mlp<double>(spec).init(store, rng);
  const auto out = apply_head<double>(store, spec, Matrix<double>::Zero(3, 6));
  EXPECT_EQ(out, Matrix<double>::Zero(3, 4));
}

TEST(ApplyHead, HandSetLinearLayer) {
  const HeadSpec spec = HeadSpec::classifier(2, 2);
  ParamStore<double> store;
  Rng rng(1);
  const Mlp<double> mlp(spec);
  mlp.init(store, rng);
  auto w = store.values(mlp.weight_name(0));
  w[0] = 1;
  w[1] = 0;
  w[2] = 0;
  w[3] = 2;
  Matrix<double> x(1, 2);
  x << 3, 4;
  const auto y = apply_head<double>(store, spec, x);
  EXPECT_EQ(y(0, 0), 3.0);
  EXPECT_EQ(y(0, 1), 8.0);
}

TEST(ApplyHead, ReluSitsBetweenLayersOnly) {
  const HeadSpec spec = HeadSpec::projection(HeadKind::simclr_projection, 1, 1, 1);
  ParamStore<double> store;
  Rng rng(1);
  const Mlp<double> mlp(spec);
  mlp.init(store, rng);
  store.values(mlp.weight_name(0))[0] = 1.0;
  store.values(mlp.weight_name(1))[0] = -1.0;
  Matrix<double> x(2, 1);
  x << 2, -3;
  const auto y = apply_head<double>(store, spec, x);
  EXPECT_EQ(y(0, 0), -2.0);  // no ReLU after the last layer
  EXPECT_EQ(y(1, 0), 0.0);   // hidden ReLU clips -3
}

TEST(ApplyHead, WrongInputWidthIsAShapeMismatch) {
  const HeadSpec spec = HeadSpec::classifier(4, 2);
  ParamStore<double> store;
  Rng rng(1);
  Mlp<double>(spec).init(store, rng);
  EXPECT_THROW(apply_head<double>(store, spec, Matrix<double>::Zero(2, 5)), ShapeMismatch);
}

TEST(HeadSpec, DimsAreCheckedAtConstruction) {
  EXPECT_THROW(HeadSpec(HeadKind::linear_classifier, {4, 8, 2}), ShapeMismatch);
  EXPECT_THROW(HeadSpec(HeadKind::simclr_projection, {4, 2}), ShapeMismatch);
  EXPECT_THROW(HeadSpec(HeadKind::linear_classifier, {4, 0}), ShapeMismatch);
}

TEST(StripHead, LeavesAFrozenEncoder) {
  const std::vector<HeadSpec> heads{HeadSpec::projection(HeadKind::simclr_projection, 12, 8, 4)};
  Rng rng(1);
  const auto full = init_params<float>(tiny_encoder(), heads, rng);
  const auto stripped = strip_head_and_freeze(full, HeadKind::simclr_projection);
  EXPECT_EQ(stripped.count_prefix("head."), 0u);
  EXPECT_EQ(stripped.size(), full.count_prefix("encoder."));
  for (const auto& e : stripped.entries()) EXPECT_FALSE(e.trainable) << e.name;
  EXPECT_THROW(strip_head_and_freeze(stripped, HeadKind::simclr_projection), UnknownHead);
}

TEST(GradientCheck, QuadraticIsExact) {
  ParamStore<double> p;
  auto& w = p.add("w", {300});
  Rng rng(4);
  for (auto& v : w.values) v = rng.uniform(-3, 3);
  const LossFunction half_norm = [](const ParamStore<double>& s, ParamStore<double>* g) {
    double l = 0;
    const auto v = s.values("w");
    for (std::size_t i = 0; i < v.size(); ++i) {
      l += 0.5 * v[i] * v[i];
      if (g) g->values("w")[i] += v[i];
    }
    return l;
  };
  Rng pick(1);
  const auto report = gradient_check(half_norm, p, pick);
  EXPECT_EQ(report.checked, 200u);
  // Central differences are exact on a quadratic; what is left is round-off of order eps * |L| / step.
  EXPECT_LE(report.max_relative_error, 1e-6);
}

TEST(GradientCheck, NtXentThroughTheCompactEncoder) {
  const EncoderConfig cfg = tiny_encoder();
  const HeadSpec proj = HeadSpec::projection(HeadKind::simclr_projection, cfg.feature_dim, 10, 6);
  Rng rng(21);
  const auto params = init_params<double>(cfg, std::vector<HeadSpec>{proj}, rng);
  const auto views = images_to_input<double>(noise_images(8, 8, 4), 8);
  const Encoder<double> enc(cfg);
  const Mlp<double> mlp(proj);
  const LossFunction loss = [&](const ParamStore<double>& p, ParamStore<double>* g) {
    return simclr_objective(p, enc, mlp, views, 0.5, g);
  };
  Rng pick(3);
  const auto report = gradient_check(loss, params, pick);
  EXPECT_GE(report.checked, 200u);
  EXPECT_LE(report.max_relative_error, 1e-4) << report.worst_parameter;
}

TEST(GradientCheck, FrozenEntriesReceiveExactlyZero) {
  const EncoderConfig cfg = tiny_encoder();
  const HeadSpec cls = HeadSpec::classifier(cfg.feature_dim, 3);
  Rng rng(2);
  auto params = init_params<double>(cfg, std::vector<HeadSpec>{cls}, rng);
  params.set_trainable_prefix("encoder.", false);
  const auto input = images_to_input<double>(noise_images(4, 8, 6), 8);
  const std::vector<int> labels{0, 1, 2, 1};
  const Encoder<double> enc(cfg);
  const Mlp<double> mlp(cls);
  const LossFunction loss = [&](const ParamStore<double>& p, ParamStore<double>* g) {
    return classifier_objective(p, enc, mlp, input, labels, g);
  };
  Rng pick(3);
  const auto report = gradient_check(loss, params, pick);
  EXPECT_EQ(report.frozen_entries, params.count_prefix("encoder."));
  EXPECT_EQ(report.frozen_nonzero, 0u);
  EXPECT_LE(report.max_relative_error, 1e-4);
}

TEST(EncoderConfig, ReferenceProfileMatchesResNet50Widths) {
  const EncoderConfig ref = EncoderConfig::reference(64);
  EXPECT_EQ(ref.feature_dim, 2048);
  const Encoder<float> enc(ref);
  Rng rng(1);
  ParamStore<float> store;
  enc.init(store, rng);
  // 53 convolutions: stem, 16 blocks of three, 4 projection shortcuts
  int convs = 0;
  for (const auto& e : store.entries()) convs += e.shape.size() == 4 ? 1 : 0;
  EXPECT_EQ(convs, 53);
  EXPECT_NEAR(static_cast<double>(store.parameter_count()), 23.5e6, 0.2e6);
}

TEST(EncoderConfig, ValidateRejectsBadFields) {
  EncoderConfig c;
  c.feature_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.widths = {12, 16};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Checkpoint, WriteReadWriteIsByteIdentical) {
  ScratchDir dir;
  const std::vector<HeadSpec> heads{HeadSpec::projection(HeadKind::moco_projection, 12, 8, 4)};
  Rng rng(6);
  auto params = init_params<float>(tiny_encoder(), heads, rng);
  params.set_trainable("encoder.stem.conv.weight", false);
  CheckpointMeta meta;
  meta.framework = "moco";
  meta.epoch = 3;
  meta.config = {{"temperature", 0.5}};
  write_checkpoint(dir / "a", params, meta);
  const Checkpoint back = read_checkpoint(dir / "a");
  EXPECT_EQ(back.params, params);
  EXPECT_EQ(back.meta.framework, "moco");
  EXPECT_EQ(back.meta.epoch, 3);
  write_checkpoint(dir / "b", back.params, back.meta);
  EXPECT_EQ(slurp(dir / "a" / "meta.json"), slurp(dir / "b" / "meta.json"));
  EXPECT_EQ(slurp(dir / "a" / "params.bin"), slurp(dir / "b" / "params.bin"));
  EXPECT_EQ(slurp(dir / "a" / "params.bin").size(), params.parameter_count() * 4);
}

TEST(Checkpoint, MissingDirectoryIsAnIoFailure) {
  ScratchDir dir;
  EXPECT_THROW(read_checkpoint(dir / "none"), IoFailure);
}

}  // namespace
}  // namespace seedcl
