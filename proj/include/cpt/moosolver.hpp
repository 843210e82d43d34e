#pragma once

// Minimum-norm point in the convex hull of objective gradients (MGDA).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cpt/errors.hpp"
#include "cpt/paramspace.hpp"

namespace cpt {

struct GradientBundle {
  std::vector<Vector> grads;
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return grads.size(); }
  std::size_t dim() const noexcept { return grads.empty() ? 0 : grads.front().size(); }

  void validate() const {
    if (grads.empty()) throw EmptyBundleError();
    for (const auto& g : grads)
      if (g.size() != grads.front().size()) throw DimensionError("gradient bundle vectors differ in length");
  }
};

struct SimplexWeights {
  Vector alpha;

  std::size_t size() const noexcept { return alpha.size(); }
  double operator[](std::size_t i) const noexcept { return alpha[i]; }
};

struct SolverOptions {
  double tol = 1e-10;  // relative to max_i |g_i|^2
  std::size_t max_iter = 100;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace detail {

inline std::vector<Vector> gram(const GradientBundle& b) {
  const std::size_t m = b.size();
  std::vector<Vector> g(m, Vector(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) g[i][j] = g[j][i] = dot(b.grads[i], b.grads[j]);
  return g;
}

// Snap tiny weights to 0 and renormalize onto the simplex.
inline SimplexWeights snap(Vector alpha) {
  double total = 0.0;
  for (double& a : alpha) {
    if (a < 1e-12) a = 0.0;
    total += a;
  }
  if (total <= 0.0) {
    std::fill(alpha.begin(), alpha.end(), 1.0 / static_cast<double>(alpha.size()));
  } else {
    for (double& a : alpha) a /= total;
  }
  return {std::move(alpha)};
}

// Two-vertex closed form: weight on g1 for min ||a g1 + (1-a) g2||.
inline double two_point_weight(double g11, double g12, double g22) {
  const double denom = g11 - 2.0 * g12 + g22;
  if (denom <= 0.0) return 0.5;  // g1 == g2
  return std::clamp((g22 - g12) / denom, 0.0, 1.0);
}

// Exact min-norm point on the affine hull of the support of alpha:
//   [G_S 1; 1^T 0] [a; mu] = [0; 1].
// Returns false when the system is singular or the solution leaves the simplex.
inline bool solve_on_support(const std::vector<Vector>& gm, Vector& alpha) {
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    if (alpha[i] > 0.0) support.push_back(i);
  const std::size_t k = support.size();
  if (k < 2) return false;
  const std::size_t n = k + 1;
  std::vector<Vector> a(n, Vector(n + 1, 0.0));
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) a[r][c] = gm[support[r]][support[c]];
    a[r][k] = 1.0;
    a[k][r] = 1.0;
  }
  a[k][n] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-300) return false;
    std::swap(a[col], a[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= n; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Vector candidate(alpha.size(), 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const double w = a[r][n] / a[r][r];
    if (!std::isfinite(w) || w < 0.0) return false;
    candidate[support[r]] = w;
  }
  alpha = std::move(candidate);
  return true;
}

inline double quad_form(const std::vector<Vector>& gm, const Vector& alpha) {
  double acc = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    for (std::size_t j = 0; j < alpha.size(); ++j) acc += alpha[i] * gm[i][j] * alpha[j];
  return acc;
}

inline double duality_gap(const std::vector<Vector>& gm, const Vector& alpha) {
  double vv = 0.0, lowest = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    double mi = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) mi += gm[i][j] * alpha[j];
    vv += alpha[i] * mi;
    if (i == 0 || mi < lowest) lowest = mi;
  }
  return vv - lowest;
}

}  // namespace detail

// Away-step Frank-Wolfe with exact line search, followed by an exact solve on
// the active face. Starts from the
// lowest-norm vertex; stops when the duality gap
//   <v, v> - min_i <v, g_i>,   v = sum_i alpha_i g_i
// drops below tol * max_i |g_i|^2. The gap bounds how much any objective can
// conflict with the returned direction, so a scale-relative test keeps the
// non-conflict guarantee independent of gradient magnitude. Ties in the
// linear oracle go to the lowest objective index.
inline SimplexWeights frank_wolfe_weights(const GradientBundle& bundle, SolverOptions opts = {}) {
  bundle.validate();
  const std::size_t m = bundle.size();
  const auto gm = detail::gram(bundle);
  double scale = 0.0;
  for (std::size_t i = 0; i < m; ++i) scale = std::max(scale, gm[i][i]);
  if (scale == 0.0) return detail::snap(Vector(m, 1.0 / static_cast<double>(m)));

  Vector alpha(m, 0.0);
  std::size_t start = 0;
  for (std::size_t i = 1; i < m; ++i)
    if (gm[i][i] < gm[start][start]) start = i;
  alpha[start] = 1.0;

  Vector m_alpha(m);
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += gm[i][j] * alpha[j];
      m_alpha[i] = acc;
    }
    double vv = 0.0;
    for (std::size_t i = 0; i < m; ++i) vv += alpha[i] * m_alpha[i];

    std::size_t toward = 0;
    for (std::size_t i = 1; i < m; ++i)
      if (m_alpha[i] < m_alpha[toward]) toward = i;
    std::size_t away = m;
    for (std::size_t i = 0; i < m; ++i)
      if (alpha[i] > 0.0 && (away == m || m_alpha[i] > m_alpha[away])) away = i;

    const double fw_gap = vv - m_alpha[toward];
    if (fw_gap <= opts.tol * scale) break;
    const double away_gap = m_alpha[away] - vv;

    if (fw_gap >= away_gap) {
      // Toward vertex `toward`: v + s (g_t - v), s in [0, 1].
      const double denom = vv - 2.0 * m_alpha[toward] + gm[toward][toward];
      const double s = denom <= 0.0 ? 0.0 : std::clamp(fw_gap / denom, 0.0, 1.0);
      for (double& a : alpha) a *= (1.0 - s);
      alpha[toward] += s;
    } else {
      // Away from vertex `away`: v + s (v - g_a), s in [0, a_away / (1 - a_away)].
      const double a_away = alpha[away];
      const double s_max = a_away >= 1.0 ? 1e300 : a_away / (1.0 - a_away);
      const double denom = vv - 2.0 * m_alpha[away] + gm[away][away];
      double s = denom <= 0.0 ? 0.0 : std::min(away_gap / denom, s_max);
      for (double& a : alpha) a *= (1.0 + s);
      alpha[away] -= s;
      if (s == s_max) alpha[away] = 0.0;  // drop step
    }
  }
  // Polish: the iterations identify the active face; finish with the exact
  // solution on it when that is feasible and no worse.
  Vector polished = alpha;
  if (detail::solve_on_support(gm, polished) &&
      detail::duality_gap(gm, polished) <= detail::duality_gap(gm, alpha) &&
      detail::quad_form(gm, polished) <= detail::quad_form(gm, alpha))
    alpha = std::move(polished);
  return detail::snap(std::move(alpha));
}

// Min-norm simplex weights. m == 2 uses the closed form, m == 1 is trivial,
// larger bundles go through Frank-Wolfe.
inline SimplexWeights min_norm_weights(const GradientBundle& bundle, SolverOptions opts = {}) {
  bundle.validate();
  if (bundle.size() == 1) return {{1.0}};
  if (bundle.size() == 2) {
    const auto gm = detail::gram(bundle);
    const double w = detail::two_point_weight(gm[0][0], gm[0][1], gm[1][1]);
    return detail::snap({w, 1.0 - w});
  }
  return frank_wolfe_weights(bundle, opts);
}

inline Vector common_descent(const GradientBundle& bundle, const SimplexWeights& w) {
  bundle.validate();
  if (w.size() != bundle.size()) throw DimensionError("common_descent: weight count != gradient count");
  Vector g(bundle.dim(), 0.0);
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    if (w[i] == 0.0) continue;
    const auto& gi = bundle.grads[i];
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += w[i] * gi[k];
  }
  return g;
}

inline bool is_pareto_stationary(const GradientBundle& bundle, double eps = 1e-8, SolverOptions opts = {}) {
  return norm2(common_descent(bundle, min_norm_weights(bundle, opts))) <= eps;
}

}  // namespace cpt
