#include "seedcl/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seedcl/error.hpp"

namespace seedcl {

using detail::EncoderOp;
using detail::OpKind;

namespace {

constexpr double kNormEps = 1e-5;

std::string stage_name(int stage, int block) {
  return "encoder.stage" + std::to_string(stage + 1) + ".block" + std::to_string(block) + ".";
}

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

}  // namespace

EncoderConfig EncoderConfig::reference(int input_size) {
  EncoderConfig c;
  c.profile = EncoderProfile::reference;
  c.input_size = input_size;
  c.feature_dim = 2048;
  c.widths = {64, 128, 256, 512};
  c.blocks_per_stage = 0;
  c.group_size = 8;
  return c;
}

void EncoderConfig::validate() const {
  if (feature_dim <= 0) throw ConfigError("encoder feature_dim must be positive");
  if (input_size < 8) throw ConfigError("encoder input_size must be at least 8");
  if (group_size <= 0) throw ConfigError("encoder group_size must be positive");
  if (profile == EncoderProfile::reference) {
    if (feature_dim != 2048) throw ConfigError("reference encoder emits 2048-d features");
    if (input_size < 32) throw ConfigError("reference encoder needs input_size >= 32");
    return;
  }
  if (widths.size() < 2 || widths.size() > 4) throw ConfigError("compact encoder needs 2 to 4 stages");
  if (blocks_per_stage < 1) throw ConfigError("compact encoder needs at least one block per stage");
  for (int w : widths)
    if (w <= 0 || w % group_size != 0)
      throw ConfigError("compact encoder widths must be positive multiples of group_size");
  if ((input_size >> (widths.size() - 1)) < 1) throw ConfigError("input_size too small for the number of stages");
}

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::simclr_projection: return "simclr_projection";
    case HeadKind::moco_projection: return "moco_projection";
    case HeadKind::byol_projection: return "byol_projection";
    case HeadKind::byol_predictor: return "byol_predictor";
    case HeadKind::linear_classifier: return "linear_classifier";
  }
  return "unknown";
}

std::string head_prefix(HeadKind kind) {
  switch (kind) {
    case HeadKind::simclr_projection:
    case HeadKind::moco_projection:
    case HeadKind::byol_projection: return "head.projection.";
    case HeadKind::byol_predictor: return "head.predictor.";
    case HeadKind::linear_classifier: return "head.classifier.";
  }
  return "head.unknown.";
}

HeadSpec::HeadSpec(HeadKind kind, std::vector<int> layer_dims) : kind_(kind), dims_(std::move(layer_dims)) {
  const std::size_t expected = kind == HeadKind::linear_classifier ? 2 : 3;
  if (dims_.size() != expected)
    throw ShapeMismatch(to_string(kind) + " expects " + std::to_string(expected) + " layer dims, got " +
                        std::to_string(dims_.size()));
  for (int d : dims_)
    if (d <= 0) throw ShapeMismatch(to_string(kind) + " layer dims must be positive");
}

// ---------------------------------------------------------------------------
// kernels

namespace {

template <typename Real>
void im2col(const Activation<Real>& x, int k, int stride, int pad, int ho, int wo, Real* cols) {
  const std::size_t n = static_cast<std::size_t>(x.batch) * ho * wo;
  for (int c = 0; c < x.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Real* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * n;
        for (int b = 0; b < x.batch; ++b) {
          const Real* src = x.data.data() + (static_cast<std::size_t>(c) * x.batch + b) * x.plane();
          for (int oy = 0; oy < ho; ++oy) {
            Real* dst = row + (static_cast<std::size_t>(b) * ho + oy) * wo;
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= x.height) {
              std::fill(dst, dst + wo, Real(0));
              continue;
            }
            const Real* line = src + static_cast<std::size_t>(iy) * x.width;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[ox] = (ix >= 0 && ix < x.width) ? line[ix] : Real(0);
            }
          }
        }
      }
    }
  }
}

template <typename Real>
void col2im(const Real* cols, int k, int stride, int pad, int ho, int wo, Activation<Real>& dx) {
  const std::size_t n = static_cast<std::size_t>(dx.batch) * ho * wo;
  for (int c = 0; c < dx.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Real* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * n;
        for (int b = 0; b < dx.batch; ++b) {
          Real* dst = dx.data.data() + (static_cast<std::size_t>(c) * dx.batch + b) * dx.plane();
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= dx.height) continue;
            const Real* src = row + (static_cast<std::size_t>(b) * ho + oy) * wo;
            Real* line = dst + static_cast<std::size_t>(iy) * dx.width;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < dx.width) line[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

template <typename Real>
bool is_pointwise(const EncoderOp& op) {
  return op.kernel == 1 && op.stride == 1 && op.pad == 0;
}

template <typename Real>
Activation<Real> conv_forward(const EncoderOp& op, const Activation<Real>& x, std::span<const Real> weight) {
  const int ho = conv_out(x.height, op.kernel, op.stride, op.pad);
  const int wo = conv_out(x.width, op.kernel, op.stride, op.pad);
  Activation<Real> y(op.out_channels, x.batch, ho, wo);
  const Eigen::Index kdim = static_cast<Eigen::Index>(op.in_channels) * op.kernel * op.kernel;
  const Eigen::Index n = static_cast<Eigen::Index>(y.columns());
  ConstMatrixMap<Real> w(weight.data(), op.out_channels, kdim);
  MatrixMap<Real> out(y.data.data(), op.out_channels, n);
  if (is_pointwise<Real>(op)) {
    out.noalias() = w * ConstMatrixMap<Real>(x.data.data(), kdim, n);
  } else {
    Matrix<Real> cols(kdim, n);
    im2col(x, op.kernel, op.stride, op.pad, ho, wo, cols.data());
    out.noalias() = w * cols;
  }
  return y;
}

// dx is accumulated when non-null; dw is accumulated when non-empty.
template <typename Real>
void conv_backward(const EncoderOp& op, const Activation<Real>& x, std::span<const Real> weight,
                   const Activation<Real>& dy, std::span<Real> dw, Activation<Real>* dx) {
  const Eigen::Index kdim = static_cast<Eigen::Index>(op.in_channels) * op.kernel * op.kernel;
  const Eigen::Index n = static_cast<Eigen::Index>(dy.columns());
  ConstMatrixMap<Real> w(weight.data(), op.out_channels, kdim);
  ConstMatrixMap<Real> g(dy.data.data(), op.out_channels, n);
  const bool pointwise = is_pointwise<Real>(op);
  if (!dw.empty()) {
    MatrixMap<Real> gw(dw.data(), op.out_channels, kdim);
    if (pointwise) {
      gw.noalias() += g * ConstMatrixMap<Real>(x.data.data(), kdim, n).transpose();
    } else {
      Matrix<Real> cols(kdim, n);
      im2col(x, op.kernel, op.stride, op.pad, dy.height, dy.width, cols.data());
      gw.noalias() += g * cols.transpose();
    }
  }
  if (dx != nullptr) {
    if (pointwise) {
      MatrixMap<Real>(dx->data.data(), kdim, n).noalias() += w.transpose() * g;
    } else {
      Matrix<Real> dcols(kdim, n);
      dcols.noalias() = w.transpose() * g;
      col2im(dcols.data(), op.kernel, op.stride, op.pad, dy.height, dy.width, *dx);
    }
  }
}

template <typename Real>
Activation<Real> norm_forward(const EncoderOp& op, const Activation<Real>& x, std::span<const Real> gamma,
                              std::span<const Real> beta, std::vector<Real>* xhat_out, std::vector<Real>* inv_out) {
  Activation<Real> y(x.channels, x.batch, x.height, x.width);
  const int gs = x.channels / op.groups;
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(gs) * static_cast<double>(plane);
  std::vector<Real> xhat;
  if (xhat_out) xhat.resize(x.data.size());
  std::vector<Real> inv_std(static_cast<std::size_t>(x.batch) * op.groups);
  for (int b = 0; b < x.batch; ++b) {
    for (int g = 0; g < op.groups; ++g) {
      double sum = 0.0;
      for (int c = g * gs; c < (g + 1) * gs; ++c) {
        const Real* p = x.data.data() + (static_cast<std::size_t>(c) * x.batch + b) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mean = sum / count;
      double var = 0.0;
      for (int c = g * gs; c < (g + 1) * gs; ++c) {
        const Real* p = x.data.data() + (static_cast<std::size_t>(c) * x.batch + b) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          var += d * d;
        }
      }
      var /= count;
      const Real inv = static_cast<Real>(1.0 / std::sqrt(var + kNormEps));
      inv_std[static_cast<std::size_t>(b) * op.groups + g] = inv;
      const Real m = static_cast<Real>(mean);
      for (int c = g * gs; c < (g + 1) * gs; ++c) {
        const std::size_t off = (static_cast<std::size_t>(c) * x.batch + b) * plane;
        const Real* p = x.data.data() + off;
        Real* q = y.data.data() + off;
        for (std::size_t i = 0; i < plane; ++i) {
          const Real h = (p[i] - m) * inv;
          if (xhat_out) xhat[off + i] = h;
          q[i] = gamma[c] * h + beta[c];
        }
      }
    }
  }
  if (xhat_out) *xhat_out = std::move(xhat);
  if (inv_out) *inv_out = std::move(inv_std);
  return y;
}

template <typename Real>
void norm_backward(const EncoderOp& op, const std::vector<Real>& xhat, const std::vector<Real>& inv_std,
                   std::span<const Real> gamma, const Activation<Real>& dy, std::span<Real> dgamma,
                   std::span<Real> dbeta, Activation<Real>& dx) {
  const int gs = dy.channels / op.groups;
  const std::size_t plane = dy.plane();
  const Real count = static_cast<Real>(gs * plane);
  for (int b = 0; b < dy.batch; ++b) {
    for (int g = 0; g < op.groups; ++g) {
      Real sum1 = 0, sum2 = 0;
      for (int c = g * gs; c < (g + 1) * gs; ++c) {
        const std::size_t off = (static_cast<std::size_t>(c) * dy.batch + b) * plane;
        Real dg = 0, db = 0;
        for (std::size_t i = 0; i < plane; ++i) {
          const Real d = dy.data[off + i];
          const Real dh = d * gamma[c];
          sum1 += dh;
          sum2 += dh * xhat[off + i];
          dg += d * xhat[off + i];
          db += d;
        }
        if (!dgamma.empty()) dgamma[c] += dg;
        if (!dbeta.empty()) dbeta[c] += db;
      }
      const Real inv = inv_std[static_cast<std::size_t>(b) * op.groups + g];
      for (int c = g * gs; c < (g + 1) * gs; ++c) {
        const std::size_t off = (static_cast<std::size_t>(c) * dy.batch + b) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const Real dh = dy.data[off + i] * gamma[c];
          dx.data[off + i] += inv / count * (count * dh - sum1 - xhat[off + i] * sum2);
        }
      }
    }
  }
}

template <typename Real>
Activation<Real> pool_forward(const EncoderOp& op, const Activation<Real>& x, std::vector<std::int32_t>* argmax) {
  const int ho = conv_out(x.height, op.kernel, op.stride, op.pad);
  const int wo = conv_out(x.width, op.kernel, op.stride, op.pad);
  Activation<Real> y(x.channels, x.batch, ho, wo);
  if (argmax) argmax->resize(y.data.size());
  std::size_t o = 0;
  for (int cb = 0; cb < x.channels * x.batch; ++cb) {
    const Real* src = x.data.data() + static_cast<std::size_t>(cb) * x.plane();
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++o) {
        Real best = -std::numeric_limits<Real>::infinity();
        std::int32_t where = 0;
        for (int ky = 0; ky < op.kernel; ++ky) {
          const int iy = oy * op.stride - op.pad + ky;
          if (iy < 0 || iy >= x.height) continue;
          for (int kx = 0; kx < op.kernel; ++kx) {
            const int ix = ox * op.stride - op.pad + kx;
            if (ix < 0 || ix >= x.width) continue;
            const Real v = src[iy * x.width + ix];
            if (v > best) {
              best = v;
              where = iy * x.width + ix;
            }
          }
        }
        y.data[o] = best;
        if (argmax) (*argmax)[o] = where;
      }
    }
  }
  return y;
}

template <typename Real>
void ensure(Activation<Real>& a, const Activation<Real>& like) {
  if (a.data.empty()) a = Activation<Real>(like.channels, like.batch, like.height, like.width);
}

template <typename Real>
std::span<Real> grad_slot(const ParamStore<Real>& store, ParamStore<Real>& grads, const std::string& name) {
  if (!store.trainable(name)) return {};
  return grads.values(name);
}

template <typename Real>
void fill_uniform(std::span<Real> values, double bound, Rng& rng) {
  for (Real& v : values) v = static_cast<Real>(rng.uniform(-bound, bound));
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoder

template <typename Real>
Encoder<Real>::Encoder(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  int channels = 3;
  auto emit = [&](EncoderOp op) {
    program_.push_back(std::move(op));
    return static_cast<int>(program_.size());
  };
  auto conv = [&](int src, const std::string& name, int out, int k, int stride) {
    EncoderOp op;
    op.kind = OpKind::conv;
    op.src = src;
    op.weight = name + ".weight";
    op.in_channels = channels;
    op.out_channels = out;
    op.kernel = k;
    op.stride = stride;
    op.pad = k / 2;
    channels = out;
    return emit(op);
  };
  auto norm = [&](int src, const std::string& name) {
    EncoderOp op;
    op.kind = OpKind::norm;
    op.src = src;
    op.weight = name + ".gamma";
    op.bias = name + ".beta";
    op.in_channels = op.out_channels = channels;
    op.groups = std::max(1, channels / config_.group_size);
    return emit(op);
  };
  auto relu = [&](int src) {
    EncoderOp op;
    op.kind = OpKind::relu;
    op.src = src;
    op.in_channels = op.out_channels = channels;
    return emit(op);
  };
  auto add = [&](int a, int b) {
    EncoderOp op;
    op.kind = OpKind::add;
    op.src = a;
    op.src2 = b;
    op.in_channels = op.out_channels = channels;
    return emit(op);
  };

  if (config_.profile == EncoderProfile::compact) {
    int cur = relu(norm(conv(0, "encoder.stem.conv", config_.widths[0], 3, 1), "encoder.stem.norm"));
    for (std::size_t s = 0; s < config_.widths.size(); ++s) {
      for (int b = 0; b < config_.blocks_per_stage; ++b) {
        const std::string base = stage_name(static_cast<int>(s), b);
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        const int in_ch = channels;
        const int out_ch = config_.widths[s];
        const int x = cur;
        int h = relu(norm(conv(x, base + "conv1", out_ch, 3, stride), base + "norm1"));
        h = norm(conv(h, base + "conv2", out_ch, 3, 1), base + "norm2");
        int shortcut = x;
        if (stride != 1 || in_ch != out_ch) {
          channels = in_ch;
          shortcut = norm(conv(x, base + "shortcut.conv", out_ch, 1, stride), base + "shortcut.norm");
        }
        cur = relu(add(h, shortcut));
      }
    }
    has_embed_ = true;
  } else {
    int cur = relu(norm(conv(0, "encoder.stem.conv", 64, 7, 2), "encoder.stem.norm"));
    EncoderOp pool;
    pool.kind = OpKind::max_pool;
    pool.src = cur;
    pool.in_channels = pool.out_channels = channels;
    pool.kernel = 3;
    pool.stride = 2;
    pool.pad = 1;
    cur = emit(pool);
    constexpr int kBlocks[4] = {3, 4, 6, 3};
    for (int s = 0; s < 4; ++s) {
      const int mid = config_.widths[s];
      for (int b = 0; b < kBlocks[s]; ++b) {
        const std::string base = stage_name(s, b);
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        const int in_ch = channels;
        const int x = cur;
        int h = relu(norm(conv(x, base + "conv1", mid, 1, 1), base + "norm1"));
        h = relu(norm(conv(h, base + "conv2", mid, 3, stride), base + "norm2"));
        h = norm(conv(h, base + "conv3", mid * 4, 1, 1), base + "norm3");
        int shortcut = x;
        if (b == 0) {
          channels = in_ch;
          shortcut = norm(conv(x, base + "shortcut.conv", mid * 4, 1, stride), base + "shortcut.norm");
        }
        cur = relu(add(h, shortcut));
      }
    }
    has_embed_ = false;
  }
  final_channels_ = channels;
  if (!has_embed_ && final_channels_ != config_.feature_dim)
    throw ConfigError("reference encoder ends with " + std::to_string(final_channels_) + " channels");
}

template <typename Real>
void Encoder<Real>::init(ParamStore<Real>& store, Rng& rng) const {
  for (const auto& op : program_) {
    if (op.kind == OpKind::conv) {
      auto& e = store.add(op.weight, {op.out_channels, op.in_channels, op.kernel, op.kernel});
      fill_uniform<Real>(e.values, std::sqrt(6.0 / (op.in_channels * op.kernel * op.kernel)), rng);
    } else if (op.kind == OpKind::norm) {
      auto& g = store.add(op.weight, {op.out_channels});
      std::fill(g.values.begin(), g.values.end(), Real(1));
      store.add(op.bias, {op.out_channels});
    }
  }
  if (has_embed_) {
    auto& w = store.add("encoder.embed.weight", {config_.feature_dim, final_channels_});
    fill_uniform<Real>(w.values, 1.0 / std::sqrt(static_cast<double>(final_channels_)), rng);
    store.add("encoder.embed.bias", {config_.feature_dim});
  }
}

template <typename Real>
Matrix<Real> Encoder<Real>::forward(const ParamStore<Real>& store, const Activation<Real>& input,
                                    EncoderTape<Real>* tape) const {
  if (input.channels != 3 || input.height != config_.input_size || input.width != config_.input_size)
    throw ShapeMismatch("encoder expects 3x" + std::to_string(config_.input_size) + "x" +
                        std::to_string(config_.input_size) + " input, got " + std::to_string(input.channels) + "x" +
                        std::to_string(input.height) + "x" + std::to_string(input.width));
  std::vector<Activation<Real>> regs;
  regs.reserve(program_.size() + 1);
  regs.push_back(input);
  if (tape) {
    tape->norm_xhat.assign(program_.size(), {});
    tape->norm_inv_std.assign(program_.size(), {});
    tape->pool_argmax.assign(program_.size(), {});
  }
  for (std::size_t i = 0; i < program_.size(); ++i) {
    const EncoderOp& op = program_[i];
    const Activation<Real>& x = regs[op.src];
    switch (op.kind) {
      case OpKind::conv:
        regs.push_back(conv_forward(op, x, store.values(op.weight)));
        break;
      case OpKind::norm:
        regs.push_back(norm_forward(op, x, store.values(op.weight), store.values(op.bias),
                                    tape ? &tape->norm_xhat[i] : nullptr, tape ? &tape->norm_inv_std[i] : nullptr));
        break;
      case OpKind::relu: {
        Activation<Real> y = x;
        for (Real& v : y.data) v = v > Real(0) ? v : Real(0);
        regs.push_back(std::move(y));
        break;
      }
      case OpKind::max_pool:
        regs.push_back(pool_forward(op, x, tape ? &tape->pool_argmax[i] : nullptr));
        break;
      case OpKind::add: {
        Activation<Real> y = x;
        const auto& other = regs[op.src2];
        for (std::size_t k = 0; k < y.data.size(); ++k) y.data[k] += other.data[k];
        regs.push_back(std::move(y));
        break;
      }
    }
  }

  const Activation<Real>& last = regs.back();
  Matrix<Real> pooled(last.batch, last.channels);
  const Real inv_plane = Real(1) / static_cast<Real>(last.plane());
  for (int c = 0; c < last.channels; ++c) {
    for (int b = 0; b < last.batch; ++b) {
      const Real* p = last.data.data() + (static_cast<std::size_t>(c) * last.batch + b) * last.plane();
      Real s = 0;
      for (std::size_t k = 0; k < last.plane(); ++k) s += p[k];
      pooled(b, c) = s * inv_plane;
    }
  }

  Matrix<Real> features;
  if (has_embed_) {
    ConstMatrixMap<Real> w(store.values("encoder.embed.weight").data(), config_.feature_dim, final_channels_);
    const auto bias = store.values("encoder.embed.bias");
    features.noalias() = pooled * w.transpose();
    for (Eigen::Index r = 0; r < features.rows(); ++r)
      for (int c = 0; c < config_.feature_dim; ++c) features(r, c) += bias[c];
  } else {
    features = pooled;
  }
  if (tape) {
    tape->registers = std::move(regs);
    tape->pooled = std::move(pooled);
  }
  return features;
}

template <typename Real>
void Encoder<Real>::backward(const ParamStore<Real>& store, const EncoderTape<Real>& tape,
                             const Matrix<Real>& grad_features, ParamStore<Real>& grads) const {
  const auto& regs = tape.registers;
  if (regs.size() != program_.size() + 1) throw ShapeMismatch("encoder tape does not match the program");
  const Activation<Real>& last = regs.back();

  Matrix<Real> dpooled;
  if (has_embed_) {
    ConstMatrixMap<Real> w(store.values("encoder.embed.weight").data(), config_.feature_dim, final_channels_);
    if (auto gw = grad_slot(store, grads, "encoder.embed.weight"); !gw.empty())
      MatrixMap<Real>(gw.data(), config_.feature_dim, final_channels_).noalias() += grad_features.transpose() * tape.pooled;
    if (auto gb = grad_slot(store, grads, "encoder.embed.bias"); !gb.empty())
      for (int c = 0; c < config_.feature_dim; ++c) gb[c] += grad_features.col(c).sum();
    dpooled.noalias() = grad_features * w;
  } else {
    dpooled = grad_features;
  }

  // Nothing upstream needs gradients when every encoder entry is frozen.
  bool any_trainable = false;
  for (const auto& op : program_)
    if ((op.kind == OpKind::conv || op.kind == OpKind::norm) && store.trainable(op.weight)) any_trainable = true;
  if (!any_trainable) return;

  std::vector<Activation<Real>> g(regs.size());
  ensure(g.back(), last);
  const Real inv_plane = Real(1) / static_cast<Real>(last.plane());
  for (int c = 0; c < last.channels; ++c) {
    for (int b = 0; b < last.batch; ++b) {
      Real* p = g.back().data.data() + (static_cast<std::size_t>(c) * last.batch + b) * last.plane();
      const Real v = dpooled(b, c) * inv_plane;
      for (std::size_t k = 0; k < last.plane(); ++k) p[k] = v;
    }
  }

  for (std::size_t i = program_.size(); i-- > 0;) {
    const EncoderOp& op = program_[i];
    Activation<Real>& dy = g[i + 1];
    if (dy.data.empty()) continue;
    const Activation<Real>& x = regs[op.src];
    switch (op.kind) {
      case OpKind::conv: {
        Activation<Real>* dx = nullptr;
        if (op.src != 0) {
          ensure(g[op.src], x);
          dx = &g[op.src];
        }
        conv_backward(op, x, store.values(op.weight), dy, grad_slot(store, grads, op.weight), dx);
        break;
      }
      case OpKind::norm:
        ensure(g[op.src], x);
        norm_backward(op, tape.norm_xhat[i], tape.norm_inv_std[i], store.values(op.weight), dy,
                      grad_slot(store, grads, op.weight), grad_slot(store, grads, op.bias), g[op.src]);
        break;
      case OpKind::relu: {
        ensure(g[op.src], x);
        const auto& y = regs[i + 1];
        auto& dx = g[op.src];
        for (std::size_t k = 0; k < dy.data.size(); ++k)
          if (y.data[k] > Real(0)) dx.data[k] += dy.data[k];
        break;
      }
      case OpKind::max_pool: {
        ensure(g[op.src], x);
        auto& dx = g[op.src];
        const auto& argmax = tape.pool_argmax[i];
        const std::size_t out_plane = dy.plane();
        for (std::size_t k = 0; k < dy.data.size(); ++k) {
          const std::size_t cb = k / out_plane;
          dx.data[cb * x.plane() + static_cast<std::size_t>(argmax[k])] += dy.data[k];
        }
        break;
      }
      case OpKind::add:
        for (int src : {op.src, op.src2}) {
          ensure(g[src], regs[src]);
          for (std::size_t k = 0; k < dy.data.size(); ++k) g[src].data[k] += dy.data[k];
        }
        break;
    }
    // register i + 1 is consumed only by ops before it in reverse order
    dy.data.clear();
    dy.data.shrink_to_fit();
  }
}

// ---------------------------------------------------------------------------
// Mlp

template <typename Real>
std::string Mlp<Real>::weight_name(std::size_t layer) const {
  return spec_.prefix() + "layer" + std::to_string(layer) + ".weight";
}

template <typename Real>
std::string Mlp<Real>::bias_name(std::size_t layer) const {
  return spec_.prefix() + "layer" + std::to_string(layer) + ".bias";
}

template <typename Real>
void Mlp<Real>::init(ParamStore<Real>& store, Rng& rng) const {
  const auto& d = spec_.layer_dims();
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    auto& w = store.add(weight_name(l), {d[l + 1], d[l]});
    const bool relu_follows = l + 2 < d.size();
    fill_uniform<Real>(w.values, relu_follows ? std::sqrt(6.0 / d[l]) : 1.0 / std::sqrt(static_cast<double>(d[l])), rng);
    store.add(bias_name(l), {d[l + 1]});
  }
}

template <typename Real>
Matrix<Real> Mlp<Real>::forward(const ParamStore<Real>& store, const Matrix<Real>& input, MlpTape<Real>* tape) const {
  const auto& d = spec_.layer_dims();
  if (input.cols() != d.front())
    throw ShapeMismatch(to_string(spec_.kind()) + " expects " + std::to_string(d.front()) + " input features, got " +
                        std::to_string(input.cols()));
  if (tape) tape->inputs.clear();
  Matrix<Real> h = input;
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    if (tape) tape->inputs.push_back(h);
    ConstMatrixMap<Real> w(store.values(weight_name(l)).data(), d[l + 1], d[l]);
    const auto b = store.values(bias_name(l));
    Matrix<Real> out;
    out.noalias() = h * w.transpose();
    const bool relu = l + 2 < d.size();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      for (int c = 0; c < d[l + 1]; ++c) {
        const Real v = out(r, c) + b[c];
        out(r, c) = relu && v < Real(0) ? Real(0) : v;
      }
    }
    h = std::move(out);
  }
  return h;
}

template <typename Real>
Matrix<Real> Mlp<Real>::backward(const ParamStore<Real>& store, const MlpTape<Real>& tape,
                                 const Matrix<Real>& grad_output, ParamStore<Real>& grads) const {
  const auto& d = spec_.layer_dims();
  Matrix<Real> g = grad_output;
  for (std::size_t l = d.size() - 1; l-- > 0;) {
    const Matrix<Real>& in = tape.inputs[l];
    if (auto gw = grad_slot(store, grads, weight_name(l)); !gw.empty())
      MatrixMap<Real>(gw.data(), d[l + 1], d[l]).noalias() += g.transpose() * in;
    if (auto gb = grad_slot(store, grads, bias_name(l)); !gb.empty())
      for (int c = 0; c < d[l + 1]; ++c) gb[c] += g.col(c).sum();
    ConstMatrixMap<Real> w(store.values(weight_name(l)).data(), d[l + 1], d[l]);
    Matrix<Real> gin;
    gin.noalias() = g * w;
    if (l > 0) {
      // input of layer l is the ReLU output of layer l - 1
      for (Eigen::Index k = 0; k < gin.size(); ++k)
        if (!(in.data()[k] > Real(0))) gin.data()[k] = Real(0);
    }
    g = std::move(gin);
  }
  return g;
}

// ---------------------------------------------------------------------------
// free functions

template <typename Real>
Activation<Real> images_to_input(std::span<const Image> batch, int input_size) {
  Activation<Real> a(3, static_cast<int>(batch.size()), input_size, input_size);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Image& img = batch[b];
    if (img.width() != input_size || img.height() != input_size)
      throw ShapeMismatch("image " + std::to_string(b) + " is " + std::to_string(img.width()) + "x" +
                          std::to_string(img.height()) + ", encoder expects " + std::to_string(input_size));
    for (int y = 0; y < input_size; ++y)
      for (int x = 0; x < input_size; ++x)
        for (int c = 0; c < 3; ++c)
          a.at(c, static_cast<int>(b), y, x) = static_cast<Real>(img.at(x, y, c) / 127.5 - 1.0);
  }
  return a;
}

template <typename Real>
ParamStore<Real> init_params(const EncoderConfig& config, std::span<const HeadSpec> heads, Rng& rng) {
  ParamStore<Real> store;
  Encoder<Real>(config).init(store, rng);
  for (const auto& h : heads) Mlp<Real>(h).init(store, rng);
  return store;
}

template <typename Real>
Matrix<Real> encode(const ParamStore<Real>& params, const EncoderConfig& config, std::span<const Image> batch) {
  const Encoder<Real> encoder(config);
  constexpr std::size_t kChunk = 64;
  Matrix<Real> out(static_cast<Eigen::Index>(batch.size()), config.feature_dim);
  for (std::size_t start = 0; start < batch.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, batch.size() - start);
    const auto input = images_to_input<Real>(batch.subspan(start, n), config.input_size);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = encoder.forward(params, input, nullptr);
  }
  return out;
}

template <typename Real>
Matrix<Real> apply_head(const ParamStore<Real>& params, const HeadSpec& spec, const Matrix<Real>& features) {
  return Mlp<Real>(spec).forward(params, features, nullptr);
}

template <typename Real>
ParamStore<Real> strip_head_and_freeze(ParamStore<Real> params, HeadKind kind) {
  if (params.erase_prefix(head_prefix(kind)) == 0)
    throw UnknownHead("parameter store has no " + to_string(kind) + " head");
  params.set_trainable_prefix("encoder.", false);
  return params;
}

#define SEEDCL_INSTANTIATE(Real)                                                                              \
  template class Encoder<Real>;                                                                               \
  template class Mlp<Real>;                                                                                   \
  template Activation<Real> images_to_input<Real>(std::span<const Image>, int);                               \
  template ParamStore<Real> init_params<Real>(const EncoderConfig&, std::span<const HeadSpec>, Rng&);         \
  template Matrix<Real> encode<Real>(const ParamStore<Real>&, const EncoderConfig&, std::span<const Image>);  \
  template Matrix<Real> apply_head<Real>(const ParamStore<Real>&, const HeadSpec&, const Matrix<Real>&);      \
  template ParamStore<Real> strip_head_and_freeze<Real>(ParamStore<Real>, HeadKind);

SEEDCL_INSTANTIATE(float)
SEEDCL_INSTANTIATE(double)

#undef SEEDCL_INSTANTIATE

}  // namespace seedcl
