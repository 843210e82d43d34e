#pragma once

// Independent reference computations used only by the tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "cpt/metrics.hpp"
#include "cpt/moosolver.hpp"
#include "cpt/paramspace.hpp"

namespace cpt::oracle {

// Central differences of a scalar function of the flat parameters.
inline Vector finite_difference(const std::function<double(const ParamVector&)>& f, ParamVector p, double h = 1e-5) {
  Vector g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = f(p);
    p[i] = orig - h;
    const double down = f(p);
    p[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_relative_error(const Vector& analytic, const Vector& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / (std::abs(analytic[i]) + 1e-8));
  return worst;
}

// Smallest |sum_i a_i g_i| over a regular simplex grid (m = 1, 2 or 3).
inline double grid_min_norm(const GradientBundle& b, double step = 1e-3) {
  const std::size_t m = b.size();
  std::vector<std::vector<double>> gram(m, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < b.dim(); ++k) acc += b.grads[i][k] * b.grads[j][k];
      gram[i][j] = acc;
    }
  const auto n = static_cast<long>(std::llround(1.0 / step));
  double best = std::numeric_limits<double>::infinity();
  auto quad = [&](const std::vector<double>& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) acc += a[i] * gram[i][j] * a[j];
    return acc;
  };
  if (m == 1) return std::sqrt(gram[0][0]);
  if (m == 2) {
    for (long i = 0; i <= n; ++i) {
      const double a = static_cast<double>(i) / static_cast<double>(n);
      best = std::min(best, quad({a, 1.0 - a}));
    }
  } else {
    for (long i = 0; i <= n; ++i)
      for (long j = 0; i + j <= n; ++j) {
        const double a = static_cast<double>(i) / static_cast<double>(n);
        const double c = static_cast<double>(j) / static_cast<double>(n);
        best = std::min(best, quad({a, c, 1.0 - a - c}));
      }
  }
  return std::sqrt(std::max(best, 0.0));
}

struct MonteCarloEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Uniform sampling of the box [min point, ref]; a sample counts when some
// point weakly dominates it.
inline MonteCarloEstimate monte_carlo_hypervolume(const std::vector<Point2>& pts, RefPoint ref, std::size_t samples,
                                                  std::uint64_t seed) {
  double lo_x = ref.x, lo_y = ref.y;
  for (const auto& p : pts) {
    lo_x = std::min(lo_x, p.x);
    lo_y = std::min(lo_y, p.y);
  }
  const double area = (ref.x - lo_x) * (ref.y - lo_y);
  if (area <= 0.0) return {};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo_x, ref.x), uy(lo_y, ref.y);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double x = ux(rng), y = uy(rng);
    for (const auto& p : pts)
      if (p.x <= x && p.y <= y) {
        ++hits;
        break;
      }
  }
  const double f = static_cast<double>(hits) / static_cast<double>(samples);
  return {f * area, area * std::sqrt(f * (1.0 - f) / static_cast<double>(samples))};
}

}  // namespace cpt::oracle
