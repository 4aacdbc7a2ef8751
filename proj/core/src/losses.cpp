#include "seedcl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "seedcl/error.hpp"
#include "seedcl/key_queue.hpp"
#include "seedcl/optimizer.hpp"

namespace seedcl {

double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeMismatch("cosine_similarity needs equal-length vectors");
  double dot = 0, nx = 0, ny = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) throw ZeroVector("cosine_similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), -1.0, 1.0);
}

namespace {

template <typename Real>
struct Normalized {
  Matrix<Real> unit;
  std::vector<Real> norms;
};

template <typename Real>
Normalized<Real> normalize_rows(const Matrix<Real>& m, const char* what) {
  Normalized<Real> out{m, std::vector<Real>(static_cast<std::size_t>(m.rows()))};
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Real n = m.row(r).norm();
    if (!(n > Real(0))) throw ZeroVector(std::string(what) + " row " + std::to_string(r) + " has zero norm");
    out.norms[static_cast<std::size_t>(r)] = n;
    out.unit.row(r) /= n;
  }
  return out;
}

// Chain rule through x -> x / |x| for every row.
template <typename Real>
Matrix<Real> unnormalize_grad(const Normalized<Real>& n, const Matrix<Real>& grad_unit) {
  Matrix<Real> g(grad_unit.rows(), grad_unit.cols());
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    const Real proj = n.unit.row(r).dot(grad_unit.row(r));
    g.row(r) = (grad_unit.row(r) - proj * n.unit.row(r)) / n.norms[static_cast<std::size_t>(r)];
  }
  return g;
}

}  // namespace

template <typename Real>
LossResult<Real> nt_xent_loss(const Matrix<Real>& latents, Real temperature) {
  const Eigen::Index rows = latents.rows();
  if (rows < 2 || rows % 2 != 0) throw ShapeMismatch("nt_xent_loss needs an even number (>= 2) of rows");
  if (!(temperature > Real(0))) throw ConfigError("temperature must be positive");
  const auto n = normalize_rows(latents, "nt_xent_loss");
  const Matrix<Real> sim = (n.unit * n.unit.transpose()) / temperature;

  // coeff(i, k) = d loss / d sim(i, k), scaled by 1 / rows below
  Matrix<Real> coeff = Matrix<Real>::Zero(rows, rows);
  double total = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::Index partner = i ^ 1;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (Eigen::Index k = 0; k < rows; ++k)
      if (k != i) mx = std::max(mx, sim(i, k));
    Real denom = 0;
    for (Eigen::Index k = 0; k < rows; ++k)
      if (k != i) denom += std::exp(sim(i, k) - mx);
    total += static_cast<double>(mx + std::log(denom) - sim(i, partner));
    for (Eigen::Index k = 0; k < rows; ++k)
      if (k != i) coeff(i, k) = std::exp(sim(i, k) - mx) / denom;
    coeff(i, partner) -= Real(1);
  }
  coeff /= static_cast<Real>(rows);
  const Matrix<Real> grad_unit = ((coeff + coeff.transpose()) * n.unit) / temperature;
  return {static_cast<Real>(total / static_cast<double>(rows)), unnormalize_grad(n, grad_unit)};
}

template <typename Real>
LossResult<Real> moco_info_nce(const Matrix<Real>& queries, const Matrix<Real>& positive_keys,
                               const Matrix<Real>& negatives, Real temperature, bool exclude_own_row) {
  const Eigen::Index batch = queries.rows();
  if (positive_keys.rows() != batch || positive_keys.cols() != queries.cols())
    throw ShapeMismatch("moco_info_nce: queries and keys differ in shape");
  if (negatives.rows() == 0) throw EmptyQueue("moco_info_nce needs at least one negative key");
  if (negatives.cols() != queries.cols()) throw ShapeMismatch("moco_info_nce: negative keys have the wrong width");
  if (exclude_own_row && negatives.rows() != batch)
    throw ShapeMismatch("moco_info_nce: exclude_own_row needs one negative row per query");
  if (exclude_own_row && batch < 2) throw EmptyQueue("moco_info_nce: no negatives left after exclusion");
  if (!(temperature > Real(0))) throw ConfigError("temperature must be positive");

  const auto q = normalize_rows(queries, "moco query");
  const auto k = normalize_rows(positive_keys, "moco key");
  const auto neg = normalize_rows(negatives, "moco negative");

  const Matrix<Real> neg_logits = (q.unit * neg.unit.transpose()) / temperature;
  Matrix<Real> grad_unit(batch, queries.cols());
  double total = 0.0;
  std::vector<Real> prob(static_cast<std::size_t>(negatives.rows()));
  for (Eigen::Index i = 0; i < batch; ++i) {
    const Real pos = q.unit.row(i).dot(k.unit.row(i)) / temperature;
    Real mx = pos;
    for (Eigen::Index m = 0; m < negatives.rows(); ++m)
      if (!(exclude_own_row && m == i)) mx = std::max(mx, neg_logits(i, m));
    Real denom = std::exp(pos - mx);
    for (Eigen::Index m = 0; m < negatives.rows(); ++m)
      if (!(exclude_own_row && m == i)) denom += std::exp(neg_logits(i, m) - mx);
    total += static_cast<double>(mx + std::log(denom) - pos);

    const Real p_pos = std::exp(pos - mx) / denom;
    Eigen::Matrix<Real, 1, Eigen::Dynamic> g = (p_pos - Real(1)) * k.unit.row(i);
    for (Eigen::Index m = 0; m < negatives.rows(); ++m) {
      if (exclude_own_row && m == i) continue;
      g += (std::exp(neg_logits(i, m) - mx) / denom) * neg.unit.row(m);
    }
    grad_unit.row(i) = g / (temperature * static_cast<Real>(batch));
  }
  return {static_cast<Real>(total / static_cast<double>(batch)), unnormalize_grad(q, grad_unit)};
}

template <typename Real>
LossResult<Real> byol_loss(const Matrix<Real>& predictions, const Matrix<Real>& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
    throw ShapeMismatch("byol_loss: prediction and target shapes differ");
  if (predictions.rows() == 0) throw ShapeMismatch("byol_loss of an empty batch");
  const auto p = normalize_rows(predictions, "byol prediction");
  const auto z = normalize_rows(targets, "byol target");
  const Real scale = Real(1) / static_cast<Real>(predictions.rows());
  double total = 0.0;
  Matrix<Real> grad_unit(predictions.rows(), predictions.cols());
  for (Eigen::Index r = 0; r < predictions.rows(); ++r) {
    const Real diff = (p.unit.row(r) - z.unit.row(r)).squaredNorm();
    total += static_cast<double>(diff);
    grad_unit.row(r) = Real(2) * scale * (p.unit.row(r) - z.unit.row(r));
  }
  return {static_cast<Real>(total / static_cast<double>(predictions.rows())), unnormalize_grad(p, grad_unit)};
}

template <typename Real>
LossResult<Real> softmax_cross_entropy(const Matrix<Real>& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw ShapeMismatch("softmax_cross_entropy: one label per row required");
  if (logits.rows() == 0) throw ShapeMismatch("softmax_cross_entropy of an empty batch");
  const Real scale = Real(1) / static_cast<Real>(logits.rows());
  Matrix<Real> grad(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) throw ShapeMismatch("label " + std::to_string(y) + " outside the logit width");
    const Real mx = logits.row(r).maxCoeff();
    Real denom = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) denom += std::exp(logits(r, c) - mx);
    total += static_cast<double>(mx + std::log(denom) - logits(r, y));
    for (Eigen::Index c = 0; c < logits.cols(); ++c) grad(r, c) = std::exp(logits(r, c) - mx) / denom * scale;
    grad(r, y) -= scale;
  }
  return {static_cast<Real>(total / static_cast<double>(logits.rows())), std::move(grad)};
}

template <typename Real>
void momentum_update(ParamStore<Real>& target, const ParamStore<Real>& source, double momentum) {
  if (momentum < 0.0 || momentum > 1.0) throw ConfigError("momentum must lie in [0, 1]");
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto& e = target.entry(i);
    if (!source.contains(e.name)) throw ShapeMismatch("momentum_update: source lacks " + e.name);
    const auto& s = source.at(e.name);
    if (s.shape != e.shape) throw ShapeMismatch("momentum_update: shape of " + e.name + " differs");
  }
  const Real m = static_cast<Real>(momentum);
  const Real one_minus = static_cast<Real>(1.0 - momentum);
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto t = target.data(i);
    const auto s = source.values(target.entry(i).name);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = m * t[k] + one_minus * s[k];
  }
}

// ---------------------------------------------------------------------------
// KeyQueue

template <typename Real>
KeyQueue<Real>::KeyQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), slots_(capacity * dim) {
  if (capacity == 0 || dim == 0) throw ConfigError("key queue capacity and dim must be positive");
}

template <typename Real>
void KeyQueue<Real>::push(const Matrix<Real>& keys) {
  if (static_cast<std::size_t>(keys.rows()) > capacity_)
    throw BatchTooLarge("pushing " + std::to_string(keys.rows()) + " keys into a queue of capacity " +
                        std::to_string(capacity_));
  if (static_cast<std::size_t>(keys.cols()) != dim_) throw ShapeMismatch("key width does not match the queue");
  const auto n = normalize_rows(keys, "key");
  for (Eigen::Index r = 0; r < keys.rows(); ++r) {
    std::size_t slot;
    if (size_ < capacity_) {
      slot = (head_ + size_) % capacity_;
      ++size_;
    } else {
      slot = head_;
      head_ = (head_ + 1) % capacity_;
    }
    for (std::size_t c = 0; c < dim_; ++c) slots_[slot * dim_ + c] = n.unit(r, static_cast<Eigen::Index>(c));
  }
}

template <typename Real>
std::span<const Real> KeyQueue<Real>::at(std::size_t i) const {
  if (i >= size_) throw ShapeMismatch("key queue index out of range");
  return std::span<const Real>(slots_).subspan(((head_ + i) % capacity_) * dim_, dim_);
}

template <typename Real>
Matrix<Real> KeyQueue<Real>::snapshot() const {
  Matrix<Real> m(static_cast<Eigen::Index>(size_), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < size_; ++i) {
    const auto row = at(i);
    for (std::size_t c = 0; c < dim_; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Adam

template <typename Real>
void Adam<Real>::step(ParamStore<Real>& params, const ParamStore<Real>& grads) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.entry(i);
    if (!e.trainable) continue;
    const auto g = grads.values(e.name);
    auto& st = state_[e.name];
    if (st.m.empty()) {
      st.m.assign(e.size(), 0.0);
      st.v.assign(e.size(), 0.0);
    }
    auto w = params.data(i);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = static_cast<double>(g[k]) + config_.weight_decay * static_cast<double>(w[k]);
      st.m[k] = config_.beta1 * st.m[k] + (1.0 - config_.beta1) * gk;
      st.v[k] = config_.beta2 * st.v[k] + (1.0 - config_.beta2) * gk * gk;
      const double mhat = st.m[k] / c1;
      const double vhat = st.v[k] / c2;
      w[k] = static_cast<Real>(static_cast<double>(w[k]) - config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }
}

#define SEEDCL_INSTANTIATE(Real)                                                                                  \
  template LossResult<Real> nt_xent_loss<Real>(const Matrix<Real>&, Real);                                        \
  template LossResult<Real> moco_info_nce<Real>(const Matrix<Real>&, const Matrix<Real>&, const Matrix<Real>&,    \
                                                Real, bool);                                                      \
  template LossResult<Real> byol_loss<Real>(const Matrix<Real>&, const Matrix<Real>&);                            \
  template LossResult<Real> softmax_cross_entropy<Real>(const Matrix<Real>&, std::span<const int>);               \
  template void momentum_update<Real>(ParamStore<Real>&, const ParamStore<Real>&, double);                        \
  template class KeyQueue<Real>;                                                                                  \
  template class Adam<Real>;

SEEDCL_INSTANTIATE(float)
SEEDCL_INSTANTIATE(double)

#undef SEEDCL_INSTANTIATE

}  // namespace seedcl
