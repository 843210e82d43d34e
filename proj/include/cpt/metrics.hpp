#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cpt/errors.hpp"
#include "cpt/objectives.hpp"
#include "cpt/paramspace.hpp"

namespace cpt {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// Upper bound of the region measured by the hypervolume (minimization).
struct RefPoint {
  double x = 2.0;
  double y = 1.0;
};

struct FrontPoint {
  std::string method;
  ReferenceVector reference;
  std::uint64_t seed = 0;
  double acc_loss = 0.0;
  double fair_loss = 0.0;
  double accuracy = 0.0;
  double eodd = 0.0;
};

inline Labels argmax_rows(const Matrix& probs) {
  Labels out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

inline double accuracy(const Labels& preds, const Labels& y) {
  if (preds.size() != y.size()) throw DimensionError("accuracy: length mismatch");
  if (y.empty()) throw EmptyBatchError();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += preds[i] == y[i];
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

namespace detail {

struct Confusion {
  std::size_t tp = 0, fn = 0, fp = 0, tn = 0;

  void add(bool predicted, bool actual) {
    if (actual) (predicted ? tp : fn)++;
    else (predicted ? fp : tn)++;
  }
};

// Sum over groups of |TPR_a - TPR| + |FPR_a - FPR| for one positive class.
// A rate with a zero denominator (in the group or overall) contributes 0.
inline double eodd_one_class(const Labels& preds, const Labels& y, const Labels& a, int positive) {
  Confusion overall;
  std::map<int, Confusion> groups;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool pred = preds[i] == positive, actual = y[i] == positive;
    overall.add(pred, actual);
    groups[a[i]].add(pred, actual);
  }
  auto rate = [](std::size_t num, std::size_t den) { return static_cast<double>(num) / static_cast<double>(den); };
  double total = 0.0;
  for (const auto& [attr, c] : groups) {
    if (c.tp + c.fn > 0 && overall.tp + overall.fn > 0)
      total += std::abs(rate(c.tp, c.tp + c.fn) - rate(overall.tp, overall.tp + overall.fn));
    if (c.fp + c.tn > 0 && overall.fp + overall.tn > 0)
      total += std::abs(rate(c.fp, c.fp + c.tn) - rate(overall.fp, overall.fp + overall.tn));
  }
  return total;
}

}  // namespace detail

// Equalized-odds gap. Binary tasks use class 1 as the positive class; with
// more classes the one-vs-rest gaps of every class are summed.
inline double eodd(const Labels& preds, const Labels& y, const Labels& a) {
  if (preds.size() != y.size() || a.size() != y.size()) throw DimensionError("eodd: length mismatch");
  if (y.empty()) return 0.0;
  int max_label = 1;
  for (std::size_t i = 0; i < y.size(); ++i) max_label = std::max({max_label, y[i], preds[i]});
  if (max_label == 1) return detail::eodd_one_class(preds, y, a, 1);
  double total = 0.0;
  for (int k = 0; k <= max_label; ++k) total += detail::eodd_one_class(preds, y, a, k);
  return total;
}

// Points not dominated by any other (minimization in both axes), duplicates
// collapsed, ordered by x ascending.
inline std::vector<Point2> nondominated(std::vector<Point2> points) {
  std::sort(points.begin(), points.end(),
            [](const Point2& p, const Point2& q) { return p.x < q.x || (p.x == q.x && p.y < q.y); });
  std::vector<Point2> front;
  for (const auto& p : points) {
    if (front.empty() || p.y < front.back().y) front.push_back(p);
  }
  return front;
}

// Exact 2-D hypervolume by a staircase sweep. Points not strictly better than
// the reference point in both coordinates are dropped with a warning.
inline double hypervolume2d(const std::vector<Point2>& points, RefPoint ref) {
  std::vector<Point2> inside;
  std::size_t excluded = 0;
  for (const auto& p : points) {
    if (p.x < ref.x && p.y < ref.y) inside.push_back(p);
    else ++excluded;
  }
  if (excluded > 0)
    detail::warn(std::to_string(excluded) + " point(s) outside the hypervolume reference point were excluded");
  const auto front = nondominated(std::move(inside));
  if (front.empty()) {
    detail::warn("hypervolume of an empty set is 0");
    return 0.0;
  }
  double hv = 0.0;
  for (std::size_t i = 0; i < front.size(); ++i) {
    const double next_x = i + 1 < front.size() ? front[i + 1].x : ref.x;
    hv += (next_x - front[i].x) * (ref.y - front[i].y);
  }
  return hv;
}

// Min-max scaling of each axis over the given set; a constant axis maps to 0.
struct AxisScaler {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;

  static AxisScaler fit(const std::vector<Point2>& pts) {
    AxisScaler s;
    if (pts.empty()) return s;
    s.x_min = s.x_max = pts.front().x;
    s.y_min = s.y_max = pts.front().y;
    for (const auto& p : pts) {
      s.x_min = std::min(s.x_min, p.x);
      s.x_max = std::max(s.x_max, p.x);
      s.y_min = std::min(s.y_min, p.y);
      s.y_max = std::max(s.y_max, p.y);
    }
    return s;
  }

  Point2 operator()(Point2 p) const {
    auto scale = [](double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; };
    return {scale(p.x, x_min, x_max), scale(p.y, y_min, y_max)};
  }
};

// Test-set evaluation of a parameter vector.
struct Evaluation {
  double accuracy = 0.0;
  double eodd = 0.0;
  double fair_loss = 0.0;
  double acc_loss = 0.0;
};

inline Evaluation evaluate(const Mlp& net, const ParamVector& p, const GroupedBatch& data) {
  data.validate();
  const BatchOutput out = net.forward(p, data.x);
  const Labels preds = argmax_rows(out.probs);
  return {accuracy(preds, data.y), eodd(preds, data.y, data.a), loss_fair(out.probs, data.y, data.a),
          loss_acc(out.probs, data.y)};
}

}  // namespace cpt
