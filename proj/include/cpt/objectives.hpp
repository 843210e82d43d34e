#pragma once

// The three training objectives: cross-entropy, the DiffEodd group gap and the
// KL divergence between the normalized loss vector and a reference vector.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "cpt/errors.hpp"
#include "cpt/paramspace.hpp"

namespace cpt {

using Labels = std::vector<int>;

struct GroupedBatch {
  Matrix x;
  Labels y;
  Labels a;

  std::size_t size() const noexcept { return y.size(); }

  void validate() const {
    if (y.empty()) throw EmptyBatchError();
    if (x.rows() != y.size() || a.size() != y.size()) throw DimensionError("X, Y and A must have equal row counts");
  }
};

struct LossVector {
  double fair = 0.0;
  double acc = 0.0;
};

struct ReferenceVector {
  double fair = 1.0;
  double acc = 1.0;

  void validate() const {
    if (!(fair > 0.0) || !(acc > 0.0)) throw Error("reference vector entries must be strictly positive");
  }

  friend bool operator==(const ReferenceVector&, const ReferenceVector&) = default;
};

inline constexpr double kLossFloor = 1e-8;

// Mean negative log-likelihood of the true class.
inline double loss_acc(const Matrix& probs, const Labels& y) {
  if (y.empty()) throw EmptyBatchError();
  if (probs.rows() != y.size()) throw DimensionError("loss_acc: probs rows != labels");
  double total = 0.0;
  for (std::size_t r = 0; r < y.size(); ++r) total -= std::log(probs(r, static_cast<std::size_t>(y[r])));
  return total / static_cast<double>(y.size());
}

// dL_acc/dlogits = (p - onehot(y)) / b.
inline Matrix loss_acc_grad_logits(const Matrix& probs, const Labels& y) {
  if (y.empty()) throw EmptyBatchError();
  Matrix g = probs;
  const double inv_b = 1.0 / static_cast<double>(y.size());
  for (std::size_t r = 0; r < y.size(); ++r) {
    g(r, static_cast<std::size_t>(y[r])) -= 1.0;
    for (double& v : g.row(r)) v *= inv_b;
  }
  return g;
}

namespace detail {

// Row indices grouped per label and per (attribute, label) cell, in ascending order.
struct CellIndex {
  std::map<int, std::vector<std::size_t>> by_label;
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_cell;  // key (a, y)

  CellIndex(const Labels& y, const Labels& a) {
    for (std::size_t r = 0; r < y.size(); ++r) {
      by_label[y[r]].push_back(r);
      by_cell[{a[r], y[r]}].push_back(r);
    }
  }
};

inline Vector mean_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Vector mean(m.cols(), 0.0);
  for (auto r : rows)
    for (std::size_t k = 0; k < m.cols(); ++k) mean[k] += m(r, k);
  for (double& v : mean) v /= static_cast<double>(rows.size());
  return mean;
}

inline double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

// Sum over present (a, y) cells of the L1 gap between the cell's mean
// probability row and the label's mean probability row. Absent cells add 0.
inline double loss_fair(const Matrix& probs, const Labels& y, const Labels& a) {
  if (probs.rows() != y.size() || a.size() != y.size()) throw DimensionError("loss_fair: row count mismatch");
  detail::CellIndex idx(y, a);
  std::map<int, Vector> label_mean;
  for (const auto& [label, rows] : idx.by_label) label_mean[label] = detail::mean_rows(probs, rows);
  double total = 0.0;
  for (const auto& [key, rows] : idx.by_cell) {
    const Vector cell = detail::mean_rows(probs, rows);
    const Vector& overall = label_mean[key.second];
    for (std::size_t k = 0; k < cell.size(); ++k) total += std::abs(cell[k] - overall[k]);
  }
  return total;
}

// Gradient of loss_fair w.r.t. probabilities; sign(0) = 0 at kinks.
inline Matrix loss_fair_grad_probs(const Matrix& probs, const Labels& y, const Labels& a) {
  if (probs.rows() != y.size() || a.size() != y.size()) throw DimensionError("loss_fair: row count mismatch");
  detail::CellIndex idx(y, a);
  std::map<int, Vector> label_mean;
  for (const auto& [label, rows] : idx.by_label) label_mean[label] = detail::mean_rows(probs, rows);
  Matrix g(probs.rows(), probs.cols());
  for (const auto& [key, rows] : idx.by_cell) {
    const Vector cell = detail::mean_rows(probs, rows);
    const Vector& overall = label_mean[key.second];
    const auto& label_rows = idx.by_label[key.second];
    const double inv_cell = 1.0 / static_cast<double>(rows.size());
    const double inv_label = 1.0 / static_cast<double>(label_rows.size());
    for (std::size_t k = 0; k < cell.size(); ++k) {
      const double s = detail::sign(cell[k] - overall[k]);
      if (s == 0.0) continue;
      for (auto r : rows) g(r, k) += s * inv_cell;
      for (auto r : label_rows) g(r, k) -= s * inv_label;
    }
  }
  return g;
}

// D_KL(l/|l|_1 || v/|v|_1), natural log, losses floored at kLossFloor.
inline double kl_constraint(LossVector l, const ReferenceVector& v) {
  const double lf = std::max(l.fair, kLossFloor), la = std::max(l.acc, kLossFloor);
  const double p = lf / (lf + la), q = v.fair / (v.fair + v.acc);
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

// Partial derivatives of kl_constraint w.r.t. (l_fair, l_acc).
inline LossVector kl_coefficients(LossVector l, const ReferenceVector& v) {
  const double lf = std::max(l.fair, kLossFloor), la = std::max(l.acc, kLossFloor);
  const double s = lf + la;
  const double p = lf / s, q = v.fair / (v.fair + v.acc);
  const double log_ratio = std::log(p * (1.0 - q) / (q * (1.0 - p)));
  return {(1.0 / s) * (1.0 - p) * log_ratio, -(1.0 / s) * p * log_ratio};
}

// Chain rule through kl_constraint: c_fair * g_fair + c_acc * g_acc.
inline Vector grad_kl(LossVector l_smoothed, const ReferenceVector& v, std::span<const double> g_fair,
                      std::span<const double> g_acc) {
  if (g_fair.size() != g_acc.size()) throw DimensionError("grad_kl: gradient lengths differ");
  const LossVector c = kl_coefficients(l_smoothed, v);
  Vector out(g_fair.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.fair * g_fair[i] + c.acc * g_acc[i];
  return out;
}

// Losses and both gradients from a single forward pass.
struct ObjectiveEval {
  LossVector loss;
  Vector grad_fair;
  Vector grad_acc;
};

inline ObjectiveEval evaluate_objectives(const Mlp& net, const ParamVector& p, const GroupedBatch& batch) {
  batch.validate();
  const BatchOutput out = net.forward(p, batch.x);
  ObjectiveEval e;
  e.loss.acc = loss_acc(out.probs, batch.y);
  e.loss.fair = loss_fair(out.probs, batch.y, batch.a);
  e.grad_acc = net.backward(p, batch.x, loss_acc_grad_logits(out.probs, batch.y));
  e.grad_fair =
      net.backward(p, batch.x, softmax_backward(out.probs, loss_fair_grad_probs(out.probs, batch.y, batch.a)));
  return e;
}

inline Vector grad_acc(const Mlp& net, const ParamVector& p, const GroupedBatch& batch) {
  batch.validate();
  const BatchOutput out = net.forward(p, batch.x);
  return net.backward(p, batch.x, loss_acc_grad_logits(out.probs, batch.y));
}

inline Vector grad_fair(const Mlp& net, const ParamVector& p, const GroupedBatch& batch) {
  batch.validate();
  const BatchOutput out = net.forward(p, batch.x);
  return net.backward(p, batch.x, softmax_backward(out.probs, loss_fair_grad_probs(out.probs, batch.y, batch.a)));
}

// Full-batch losses at p.
inline LossVector evaluate_losses(const Mlp& net, const ParamVector& p, const GroupedBatch& batch) {
  batch.validate();
  const BatchOutput out = net.forward(p, batch.x);
  return {loss_fair(out.probs, batch.y, batch.a), loss_acc(out.probs, batch.y)};
}

}  // namespace cpt
