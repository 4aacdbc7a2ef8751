#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seedcl/params.hpp"
#include "seedcl/tensor.hpp"

namespace seedcl {

template <typename Real>
struct LossResult {
  Real loss = 0;
  Matrix<Real> grad;  // d loss / d input rows, same shape as the input
};

/// x.y / (|x| |y|). Throws ZeroVector when either norm is zero.
double cosine_similarity(std::span<const double> x, std::span<const double> y);

/// Normalized temperature-scaled cross entropy over 2N rows, where rows 2i
/// and 2i+1 are the two views of one image. Mean over all 2N anchors; each
/// anchor's softmax runs over every other row.
template <typename Real>
LossResult<Real> nt_xent_loss(const Matrix<Real>& latents, Real temperature);

/// InfoNCE of queries against their positive keys and a bank of negatives,
/// averaged over the batch. Keys and negatives are treated as constants; the
/// gradient is with respect to the queries only. With exclude_own_row, row i
/// of `negatives` is skipped for query i (used when the bank is the current
/// batch's own keys).
template <typename Real>
LossResult<Real> moco_info_nce(const Matrix<Real>& queries, const Matrix<Real>& positive_keys,
                               const Matrix<Real>& negatives, Real temperature, bool exclude_own_row = false);

/// Normalized MSE between predictions and target projections,
/// |p/|p| - z/|z||^2 = 2 - 2 cos(p, z), averaged over rows. Gradient with
/// respect to the predictions only.
template <typename Real>
LossResult<Real> byol_loss(const Matrix<Real>& predictions, const Matrix<Real>& targets);

/// Mean softmax cross entropy of logits against integer labels.
template <typename Real>
LossResult<Real> softmax_cross_entropy(const Matrix<Real>& logits, std::span<const int> labels);

/// target <- m * target + (1 - m) * source for every entry of target. Each
/// target entry needs a same-shaped entry of the same name in source (which
/// may hold more, e.g. a predictor head); otherwise ShapeMismatch.
template <typename Real>
void momentum_update(ParamStore<Real>& target, const ParamStore<Real>& source, double momentum);

/// Same elementwise map as momentum_update, named for the BYOL target.
template <typename Real>
void ema_update(ParamStore<Real>& target, const ParamStore<Real>& online, double decay) {
  momentum_update(target, online, decay);
}

}  // namespace seedcl
