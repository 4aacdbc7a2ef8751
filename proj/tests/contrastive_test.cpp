#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "seedcl/contrastive.hpp"
#include "seedcl/error.hpp"
#include "seedcl/key_queue.hpp"
#include "seedcl/losses.hpp"
#include "seedcl/optimizer.hpp"
#include "seedcl/synthgen.hpp"

namespace seedcl {
namespace {

Matrix<double> rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix<double> m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix<double> random_rows(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<double> m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Direct transcription of the per-anchor sum, one anchor at a time.
double nt_xent_brute_force(const Matrix<double>& z, double tau) {
  const Eigen::Index n2 = z.rows();
  auto sim = [&](Eigen::Index a, Eigen::Index b) { return z.row(a).dot(z.row(b)) / (z.row(a).norm() * z.row(b).norm()); };
  double total = 0;
  for (Eigen::Index i = 0; i < n2; ++i) {
    const Eigen::Index j = i ^ 1;
    double denom = 0;
    for (Eigen::Index k = 0; k < n2; ++k)
      if (k != i) denom += std::exp(sim(i, k) / tau);
    total += -std::log(std::exp(sim(i, j) / tau) / denom);
  }
  return total / static_cast<double>(n2);
}

TEST(CosineSimilarity, HandValues) {
  const std::vector<double> x{1, 0}, y{0, 1}, d{1, 1};
  EXPECT_EQ(cosine_similarity(x, x), 1.0);
  EXPECT_EQ(cosine_similarity(x, y), 0.0);
  EXPECT_NEAR(cosine_similarity(d, x), 0.70711, 1e-5);
  const std::vector<double> zero{0, 0};
  EXPECT_THROW(cosine_similarity(zero, x), ZeroVector);
}

TEST(NtXent, SinglePairAlignedIsZero) {
  const auto r = nt_xent_loss<double>(rows({{1, 0}, {1, 0}}), 1.0);
  EXPECT_EQ(r.loss, 0.0);
}

TEST(NtXent, TwoOrthogonalAlignedPairs) {
  const auto z = rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}});
  const auto r = nt_xent_loss<double>(z, 0.5);
  EXPECT_NEAR(r.loss, 0.23954, 1e-4);
  EXPECT_NEAR(r.loss, std::log(1 + 2 * std::exp(-2.0)), 1e-12);
  EXPECT_NEAR(r.loss, nt_xent_brute_force(z, 0.5), 1e-12);
}

TEST(NtXent, MatchesBruteForceOnRandomBatches) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto z = random_rows(2 * (1 + static_cast<int>(s % 6)), 5, s);
    const double tau = 0.1 + 0.1 * static_cast<double>(s % 5);
    const auto r = nt_xent_loss<double>(z, tau);
    EXPECT_NEAR(r.loss, nt_xent_brute_force(z, tau), 1e-10);
    EXPECT_GE(r.loss, 0.0);
  }
}

TEST(NtXent, InvariantToRowScalingAndPairOrder) {
  const auto z = random_rows(8, 6, 3);
  const double base = nt_xent_loss<double>(z, 0.5).loss;
  Matrix<double> scaled = z;
  scaled.row(3) *= 7.5;
  scaled.row(4) *= 0.01;
  EXPECT_NEAR(nt_xent_loss<double>(scaled, 0.5).loss, base, 1e-12);
  Matrix<double> permuted(8, 6);
  const int order[4] = {2, 0, 3, 1};
  for (int p = 0; p < 4; ++p) {
    permuted.row(2 * p) = z.row(2 * order[p]);
    permuted.row(2 * p + 1) = z.row(2 * order[p] + 1);
  }
  EXPECT_NEAR(nt_xent_loss<double>(permuted, 0.5).loss, base, 1e-12);
  Matrix<double> swapped = z;
  swapped.row(0).swap(swapped.row(1));
  EXPECT_NEAR(nt_xent_loss<double>(swapped, 0.5).loss, base, 1e-12);
}

TEST(NtXent, GradientMatchesFiniteDifferences) {
  const auto z = random_rows(6, 4, 9);
  const auto r = nt_xent_loss<double>(z, 0.3);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Matrix<double> up = z, down = z;
    up.data()[i] += h;
    down.data()[i] -= h;
    const double fd = (nt_xent_loss<double>(up, 0.3).loss - nt_xent_loss<double>(down, 0.3).loss) / (2 * h);
    EXPECT_NEAR(r.grad.data()[i], fd, 1e-7);
  }
}

TEST(NtXent, StableAtTinyTemperature) {
  const auto r = nt_xent_loss<double>(random_rows(8, 3, 1), 1e-3);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_TRUE(r.grad.allFinite());
}

TEST(NtXent, RejectsZeroRowsAndOddBatches) {
  EXPECT_THROW(nt_xent_loss<double>(rows({{1, 0}, {0, 0}}), 0.5), ZeroVector);
  EXPECT_THROW(nt_xent_loss<double>(rows({{1, 0}, {0, 1}, {1, 1}}), 0.5), ShapeMismatch);
}

TEST(MocoInfoNce, SingleNegative) {
  const auto r = moco_info_nce<double>(rows({{1, 0}}), rows({{1, 0}}), rows({{0, 1}}), 1.0);
  EXPECT_NEAR(r.loss, 0.31326, 1e-5);
  EXPECT_NEAR(r.loss, std::log(1 + std::exp(-1.0)), 1e-12);
}

TEST(MocoInfoNce, MOrthogonalCopies) {
  for (int m : {1, 4, 64, 256}) {
    Matrix<double> queue(m, 2);
    for (int i = 0; i < m; ++i) queue.row(i) << 0, 3;
    const auto r = moco_info_nce<double>(rows({{2, 0}}), rows({{1, 0}}), queue, 1.0);
    EXPECT_NEAR(r.loss, std::log(1 + m * std::exp(-1.0)), 1e-12) << m;
  }
}

TEST(MocoInfoNce, AlwaysPositiveWithNegatives) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto q = random_rows(4, 5, s);
    const auto r = moco_info_nce<double>(q, q, random_rows(7, 5, s + 100), 0.2);
    EXPECT_GT(r.loss, 0.0);
  }
}

TEST(MocoInfoNce, GradientMatchesFiniteDifferencesOnQueries) {
  const auto q = random_rows(3, 4, 1);
  const auto k = random_rows(3, 4, 2);
  const auto neg = random_rows(5, 4, 3);
  const auto r = moco_info_nce<double>(q, k, neg, 0.4);
  ASSERT_EQ(r.grad.rows(), 3);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    Matrix<double> up = q, down = q;
    up.data()[i] += h;
    down.data()[i] -= h;
    const double fd = (moco_info_nce<double>(up, k, neg, 0.4).loss - moco_info_nce<double>(down, k, neg, 0.4).loss) / (2 * h);
    EXPECT_NEAR(r.grad.data()[i], fd, 1e-7);
  }
}

TEST(MocoInfoNce, ExcludingOwnRowDropsThatNegative) {
  const auto q = rows({{1, 0}, {0, 1}});
  const auto k = rows({{1, 0}, {0, 1}});
  const auto with_own = moco_info_nce<double>(q, k, k, 1.0, false);
  const auto without = moco_info_nce<double>(q, k, k, 1.0, true);
  EXPECT_NEAR(without.loss, std::log(1 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(with_own.loss, std::log(2 + std::exp(-1.0)), 1e-12);
}

TEST(MocoInfoNce, EmptyBankIsAnError) {
  EXPECT_THROW(moco_info_nce<double>(rows({{1, 0}}), rows({{1, 0}}), Matrix<double>(0, 2), 1.0), EmptyQueue);
}

TEST(ByolLoss, HandValues) {
  EXPECT_NEAR(byol_loss<double>(rows({{0.3, 0.4}}), rows({{0.3, 0.4}})).loss, 0.0, 1e-15);
  EXPECT_NEAR(byol_loss<double>(rows({{1, 0}}), rows({{0, 1}})).loss, 2.0, 1e-15);
  EXPECT_NEAR(byol_loss<double>(rows({{2, 0}}), rows({{1, 0}})).loss, 0.0, 1e-15);
  EXPECT_NEAR(byol_loss<double>(rows({{1, 0}}), rows({{-1, 0}})).loss, 4.0, 1e-15);
}

TEST(ByolLoss, BoundedAndScaleInvariant) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto p = random_rows(5, 3, s);
    const auto z = random_rows(5, 3, s + 50);
    const double l = byol_loss<double>(p, z).loss;
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 4.0);
    EXPECT_NEAR(byol_loss<double>(p * 3.0, z * 0.2).loss, l, 1e-12);
  }
}

TEST(ByolLoss, GradientMatchesFiniteDifferences) {
  const auto p = random_rows(3, 4, 5);
  const auto z = random_rows(3, 4, 6);
  const auto r = byol_loss<double>(p, z);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Matrix<double> up = p, down = p;
    up.data()[i] += h;
    down.data()[i] -= h;
    EXPECT_NEAR(r.grad.data()[i], (byol_loss<double>(up, z).loss - byol_loss<double>(down, z).loss) / (2 * h), 1e-8);
  }
  EXPECT_THROW(byol_loss<double>(rows({{0, 0}}), rows({{1, 0}})), ZeroVector);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogClassCount) {
  const std::vector<int> labels{0, 2};
  const auto r = softmax_cross_entropy<double>(Matrix<double>::Zero(2, 3), labels);
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-15);
  EXPECT_NEAR(r.grad(0, 0), (1.0 / 3 - 1) / 2, 1e-15);
  EXPECT_NEAR(r.grad(0, 1), (1.0 / 3) / 2, 1e-15);
}

ParamStore<double> scalar_store(double v) {
  ParamStore<double> s;
  s.add("w", {1}).values[0] = v;
  return s;
}

ParamStore<double> random_store(std::uint64_t seed) {
  Rng rng(seed);
  ParamStore<double> s;
  for (auto& v : s.add("a", {3, 4}).values) v = rng.normal();
  for (auto& v : s.add("b", {5}).values) v = rng.normal();
  return s;
}

TEST(MomentumUpdate, FixedPointAndCopy) {
  auto target = random_store(1);
  const auto source = random_store(2);
  const auto before = target;
  momentum_update(target, source, 1.0);
  EXPECT_EQ(target, before);
  momentum_update(target, source, 0.0);
  EXPECT_EQ(target, source);
}

TEST(MomentumUpdate, ScalarSubstitution) {
  auto k = scalar_store(0.0);
  const auto q = scalar_store(1.0);
  momentum_update(k, q, 0.999);
  EXPECT_NEAR(k.values("w")[0], 0.001, 1e-15);
  EXPECT_EQ(q.values("w")[0], 1.0);
}

TEST(MomentumUpdate, ShapeMismatchIsAnError) {
  auto target = random_store(1);
  ParamStore<double> other;
  other.add("a", {4, 3});
  other.add("b", {5});
  EXPECT_THROW(momentum_update(target, other, 0.5), ShapeMismatch);
  ParamStore<double> missing;
  missing.add("a", {3, 4});
  EXPECT_THROW(momentum_update(target, missing, 0.5), ShapeMismatch);
}

TEST(EmaUpdate, GeometricClosedForm) {
  const double c = 2.5, t0 = -1.0, decay = 0.9;
  auto target = scalar_store(t0);
  const auto online = scalar_store(c);
  for (int t = 1; t <= 50; ++t) {
    ema_update(target, online, decay);
    EXPECT_NEAR(target.values("w")[0], c + (t0 - c) * std::pow(decay, t), 1e-12);
  }
}

TEST(EmaUpdate, GapShrinksByTheDecayEveryStep) {
  auto target = random_store(3);
  const auto online = random_store(4);
  auto gap = [&] {
    double g = 0;
    for (std::size_t i = 0; i < target.size(); ++i)
      for (std::size_t k = 0; k < target.entry(i).size(); ++k)
        g = std::max(g, std::fabs(target.entry(i).values[k] - online.entry(i).values[k]));
    return g;
  };
  double prev = gap();
  for (int t = 0; t < 10; ++t) {
    ema_update(target, online, 0.7);
    const double now = gap();
    EXPECT_NEAR(now, 0.7 * prev, 1e-12);
    prev = now;
  }
}

Matrix<double> tagged(int tag, int dim) {
  Matrix<double> m = Matrix<double>::Zero(1, dim);
  m(0, tag % dim) = 1.0;
  m(0, (tag / dim) % dim) += 2.0;
  return m;
}

TEST(KeyQueue, FifoWithTaggedVectors) {
  for (std::size_t k : {4u, 64u, 256u}) {
    const int dim = 32;
    KeyQueue<double> q(k, dim);
    std::vector<int> model;  // oracle: tags in insertion order
    int next_tag = 0;
    Rng rng(k);
    for (int round = 0; round < 40; ++round) {
      const int b = 1 + static_cast<int>(rng.below(k));
      Matrix<double> batch(b, dim);
      for (int i = 0; i < b; ++i) {
        batch.row(i) = tagged(next_tag, dim);
        model.push_back(next_tag++);
      }
      q.push(batch);
      if (model.size() > k) model.erase(model.begin(), model.end() - static_cast<std::ptrdiff_t>(k));
      ASSERT_EQ(q.size(), model.size());
      for (std::size_t i = 0; i < q.size(); ++i) {
        const Matrix<double> expect = tagged(model[i], dim).normalized();
        const auto got = q.at(i);
        for (int d = 0; d < dim; ++d) ASSERT_NEAR(got[d], expect(0, d), 1e-12) << "K=" << k << " slot " << i;
      }
    }
  }
}

TEST(KeyQueue, PushingIntoAFullQueueEvictsTheOldest) {
  KeyQueue<double> q(4, 2);
  q.push(rows({{1, 0}, {2, 0}, {3, 0}, {4, 0}}));
  q.push(rows({{0, 1}, {0, 2}}));
  EXPECT_EQ(q.size(), 4u);
  const auto snap = q.snapshot();
  EXPECT_EQ(snap.row(0), rows({{1, 0}}));
  EXPECT_EQ(snap.row(2), rows({{0, 1}}));
}

TEST(KeyQueue, EmptyPushOfThreeAndNormalization) {
  KeyQueue<double> q(256, 2);
  q.push(rows({{3, 4}, {0, 5}, {1, 1}}));
  EXPECT_EQ(q.size(), 3u);
  const auto first = q.at(0);
  EXPECT_NEAR(std::hypot(first[0], first[1]), 1.0, 1e-12);
  EXPECT_NEAR(first[0], 0.6, 1e-12);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(std::hypot(q.at(i)[0], q.at(i)[1]), 1.0, 1e-6);
}

TEST(KeyQueue, RejectsOversizedBatchesAndZeroKeys) {
  KeyQueue<double> q(2, 2);
  EXPECT_THROW(q.push(rows({{1, 0}, {1, 0}, {1, 0}})), BatchTooLarge);
  EXPECT_THROW(q.push(rows({{0, 0}})), ZeroVector);
  EXPECT_THROW(q.push(rows({{1, 0, 0}})), ShapeMismatch);
}

TEST(Adam, FrozenEntriesStayBitIdentical) {
  ParamStore<float> p;
  Rng rng(3);
  for (auto& v : p.add("frozen", {10}, false).values) v = static_cast<float>(rng.normal());
  for (auto& v : p.add("live", {10}).values) v = static_cast<float>(rng.normal());
  const auto frozen_before = p.at("frozen").values;
  Adam<float> opt(AdamConfig{.weight_decay = 1e-4});
  for (int s = 0; s < 100; ++s) {
    auto g = p.zeros_like();
    for (auto& v : g.values("frozen")) v = 1.0f;
    for (auto& v : g.values("live")) v = 1.0f;
    opt.step(p, g);
  }
  EXPECT_EQ(p.at("frozen").values, frozen_before);
  EXPECT_EQ(opt.steps(), 100);
}

TEST(Adam, FirstStepMovesByTheLearningRate) {
  ParamStore<double> p;
  p.add("w", {2}).values = {1.0, -1.0};
  ParamStore<double> g = p.zeros_like();
  g.values("w")[0] = 0.5;
  g.values("w")[1] = -3.0;
  Adam<double> opt(AdamConfig{.learning_rate = 0.1});
  opt.step(p, g);
  EXPECT_NEAR(p.values("w")[0], 0.9, 1e-7);
  EXPECT_NEAR(p.values("w")[1], -0.9, 1e-7);
}

TEST(Adam, MinimizesAQuadratic) {
  ParamStore<double> p;
  p.add("w", {3}).values = {4.0, -2.0, 7.0};
  Adam<double> opt(AdamConfig{.learning_rate = 0.05});
  for (int s = 0; s < 2000; ++s) {
    auto g = p.zeros_like();
    for (int i = 0; i < 3; ++i) g.values("w")[i] = 2 * p.values("w")[i];
    opt.step(p, g);
  }
  for (double v : p.values("w")) EXPECT_NEAR(v, 0.0, 1e-2);
}

TEST(FrameworkConfig, DefaultsAndReferenceSizes) {
  const FrameworkConfig d;
  EXPECT_EQ(d.temperature, 0.5);
  EXPECT_EQ(d.momentum, 0.999);
  EXPECT_EQ(d.ema_decay, 0.99);
  EXPECT_FALSE(d.symmetrize_byol);
  const auto moco = FrameworkConfig::reference(Framework::moco);
  EXPECT_EQ(moco.queue_capacity, 256);
  EXPECT_EQ(moco.projection_dims, (std::vector<int>{2048, 2048, 128}));
  const auto byol = FrameworkConfig::reference(Framework::byol);
  EXPECT_EQ(byol.projection_dims, (std::vector<int>{2048, 4096, 256}));
  EXPECT_EQ(byol.predictor_dims.back(), 256);
  const auto desk_moco = FrameworkConfig::desk(Framework::moco);
  EXPECT_EQ(desk_moco.queue_capacity, 64);
  EXPECT_EQ(desk_moco.temperature, 0.2);
  EXPECT_EQ(desk_moco.momentum, 0.99);
  EXPECT_EQ(FrameworkConfig::desk(Framework::simclr).temperature, 0.5);
}

TEST(FrameworkConfig, ValidateRejectsOutOfRangeFields) {
  auto c = FrameworkConfig::desk(Framework::moco);
  EXPECT_NO_THROW(c.validate(32, 128));
  EXPECT_THROW(c.validate(128, 128), ConfigError);  // queue smaller than the batch
  EXPECT_THROW(c.validate(32, 64), ConfigError);    // head does not fit the encoder
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(32, 128), ConfigError);
  c = FrameworkConfig::desk(Framework::byol);
  c.ema_decay = 1.5;
  EXPECT_THROW(c.validate(32, 128), ConfigError);
  EXPECT_THROW(parse_framework("swav"), ConfigError);
  EXPECT_EQ(parse_framework("byol"), Framework::byol);
}

TEST(TrainConfig, SimclrNeedsTwoImagesPerBatch) {
  TrainConfig t;
  t.batch_size = 1;
  EXPECT_THROW(t.validate(Framework::simclr), ConfigError);
  t.batch_size = 2;
  EXPECT_NO_THROW(t.validate(Framework::simclr));
  t.learning_rate = 0;
  EXPECT_THROW(t.validate(Framework::simclr), ConfigError);
}

std::vector<Image> blob_images(int n, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    Image img(size, size, Rgb{220, 220, 220});
    const int cx = rng.uniform_int(2, size - 3), cy = rng.uniform_int(2, size - 3);
    const Rgb color{static_cast<std::uint8_t>(rng.below(200)), static_cast<std::uint8_t>(rng.below(200)), 60};
    for (int y = cy - 2; y <= cy + 2; ++y)
      for (int x = cx - 2; x <= cx + 2; ++x) img.set_pixel(x, y, color);
    out.push_back(std::move(img));
  }
  return out;
}

struct TinyRun {
  FrameworkConfig framework;
  TrainConfig train;
  AugmentationPolicy policy;
  EncoderConfig encoder;
};

TinyRun tiny_run(Framework f) {
  TinyRun r;
  r.encoder.input_size = 16;
  r.encoder.feature_dim = 16;
  r.encoder.widths = {8, 16};
  r.framework = FrameworkConfig::desk(f, 16);
  r.framework.queue_capacity = 16;
  r.train.epochs = 2;
  r.train.batch_size = 4;
  r.train.seed = 7;
  r.policy.output_size = 16;
  return r;
}

TEST(Pretrain, OneEpochOnFourImagesLogsOneEntry) {
  auto r = tiny_run(Framework::simclr);
  r.train.epochs = 1;
  const auto images = blob_images(4, 16, 1);
  const auto res = pretrain(r.framework, r.train, images, r.policy, r.encoder);
  EXPECT_EQ(res.epoch_means.size(), 1u);
  EXPECT_EQ(res.steps.size(), 1u);
  EXPECT_EQ(res.steps_per_epoch, 1);
  EXPECT_GT(res.params.count_prefix("head.projection."), 0u);
}

TEST(Pretrain, MocoQueueFillsByTheCountingOracle) {
  for (int epochs : {1, 2, 3}) {
    auto r = tiny_run(Framework::moco);
    r.train.epochs = epochs;
    r.framework.queue_capacity = 20;
    const auto images = blob_images(9, 16, 2);  // two steps of four, one image dropped
    const auto res = pretrain(r.framework, r.train, images, r.policy, r.encoder);
    EXPECT_EQ(res.steps_per_epoch, 2);
    EXPECT_EQ(res.queue_size, std::min<std::size_t>(20, static_cast<std::size_t>(epochs) * 2 * 4));
    EXPECT_EQ(res.steps.size(), static_cast<std::size_t>(epochs * 2));
  }
}

TEST(Pretrain, EveryFrameworkRunsAndIsReproducible) {
  for (Framework f : {Framework::simclr, Framework::moco, Framework::byol}) {
    const auto r = tiny_run(f);
    const auto images = blob_images(8, 16, 3);
    const auto a = pretrain(r.framework, r.train, images, r.policy, r.encoder);
    const auto b = pretrain(r.framework, r.train, images, r.policy, r.encoder);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (std::size_t i = 0; i < a.steps.size(); ++i) EXPECT_EQ(a.steps[i].loss, b.steps[i].loss) << to_string(f);
    EXPECT_EQ(a.params, b.params) << to_string(f);
    for (const auto& s : a.steps) EXPECT_TRUE(std::isfinite(s.loss));
  }
}

TEST(Pretrain, ThreadCountDoesNotChangeTheResult) {
  auto r = tiny_run(Framework::simclr);
  const auto images = blob_images(8, 16, 4);
  const auto serial = pretrain(r.framework, r.train, images, r.policy, r.encoder);
  r.train.threads = 3;
  const auto threaded = pretrain(r.framework, r.train, images, r.policy, r.encoder);
  EXPECT_EQ(serial.params, threaded.params);
  EXPECT_EQ(serial.epoch_means, threaded.epoch_means);
}

TEST(Pretrain, ByolLeavesOnlineHeadsAndStripsCleanly) {
  const auto r = tiny_run(Framework::byol);
  const auto images = blob_images(8, 16, 5);
  const auto res = pretrain(r.framework, r.train, images, r.policy, r.encoder);
  EXPECT_GT(res.params.count_prefix("head.predictor."), 0u);
  EXPECT_EQ(res.params.count_prefix("target."), 0u);
  const auto stripped = strip_framework_heads(res.params, Framework::byol);
  EXPECT_EQ(stripped.count_prefix("head."), 0u);
  for (const auto& e : stripped.entries()) EXPECT_FALSE(e.trainable);
}

TEST(Pretrain, TwentyEpochsOnToySeedsLowerTheLoss) {
  Rng rng(3);
  ToyCutoutOptions toy;
  toy.major_axis = 10;
  const auto cutouts = generate_toy_cutouts(3, 10, rng, toy);
  std::vector<Image> images;
  for (int i = 0; i < 64; ++i) {
    const auto cls = std::span(cutouts).subspan(static_cast<std::size_t>(i % 3) * 10, 10);
    images.push_back(compose_image(cls, 20, 32, 32, Rgb{220, 220, 220}, ComposeOptions{}, rng).image);
  }
  for (Framework f : {Framework::simclr, Framework::moco, Framework::byol}) {
    SCOPED_TRACE(std::string(to_string(f)));
    const EncoderConfig enc;
    TrainConfig train;
    train.epochs = 20;
    train.batch_size = 32;
    train.seed = 5;
    AugmentationPolicy policy;
    policy.output_size = enc.input_size;
    FrameworkConfig fc = FrameworkConfig::desk(f);
    // Equal negative counts before and after the queue fills keep the epoch losses comparable.
    fc.queue_capacity = train.batch_size;
    const auto res = pretrain(fc, train, images, policy, enc);
    ASSERT_EQ(res.epoch_means.size(), 20u);
    EXPECT_LT(res.epoch_means.back(), res.epoch_means.front());
  }
}

TEST(Pretrain, MismatchedPolicySizeIsAConfigError) {
  auto r = tiny_run(Framework::simclr);
  r.policy.output_size = 12;
  const auto images = blob_images(4, 16, 1);
  EXPECT_THROW(pretrain(r.framework, r.train, images, r.policy, r.encoder), ConfigError);
}

TEST(Pretrain, DivergingLossAbortsWithNumericFailure) {
  auto r = tiny_run(Framework::simclr);
  r.train.learning_rate = 1e30;
  r.train.epochs = 5;
  const auto images = blob_images(8, 16, 6);
  EXPECT_THROW(pretrain(r.framework, r.train, images, r.policy, r.encoder), NumericFailure);
}

}  // namespace
}  // namespace seedcl
