#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpt/moosolver.hpp"
#include "oracles.hpp"

using namespace cpt;

namespace {

GradientBundle random_bundle(std::size_t m, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  GradientBundle b;
  for (std::size_t i = 0; i < m; ++i) {
    Vector g(dim);
    for (double& v : g) v = n(rng);
    b.grads.push_back(std::move(g));
    b.labels.push_back("g" + std::to_string(i));
  }
  return b;
}

double combined_norm(const GradientBundle& b) { return norm2(common_descent(b, min_norm_weights(b))); }

void expect_simplex(const SimplexWeights& w) {
  double total = 0.0;
  for (double a : w.alpha) {
    EXPECT_GE(a, 0.0);
    total += a;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

}  // namespace

TEST(MinNorm, OrthogonalUnitVectorsSplitEvenly) {
  const GradientBundle b{{{1, 0}, {0, 1}}, {"a", "b"}};
  const SimplexWeights w = min_norm_weights(b);
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(w[1], 0.5);
  const Vector g = common_descent(b, w);
  EXPECT_DOUBLE_EQ(g[0], 0.5);
  EXPECT_DOUBLE_EQ(g[1], 0.5);
}

TEST(MinNorm, UnequalLengths) {
  const GradientBundle b{{{2, 0}, {0, 1}}, {"a", "b"}};
  const SimplexWeights w = min_norm_weights(b);
  EXPECT_NEAR(w[0], 0.2, 1e-15);
  EXPECT_NEAR(w[1], 0.8, 1e-15);
  const Vector g = common_descent(b, w);
  EXPECT_NEAR(g[0], 0.4, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
  EXPECT_NEAR(dot(g, g), 0.8, 1e-14);
  EXPECT_NEAR(norm2(g), oracle::grid_min_norm(b), 1e-3);
}

TEST(MinNorm, ClipsToVertex) {
  const GradientBundle b{{{1, 0}, {2, 0}}, {"a", "b"}};
  const SimplexWeights w = min_norm_weights(b);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], 0.0);
  EXPECT_EQ(common_descent(b, w), (Vector{1, 0}));
}

TEST(MinNorm, EqualGradientsGiveHalf) {
  const GradientBundle b{{{1, 2}, {1, 2}}, {"a", "b"}};
  EXPECT_EQ(min_norm_weights(b)[0], 0.5);
}

TEST(MinNorm, SingleObjective) {
  const GradientBundle b{{{3, 4}}, {"a"}};
  EXPECT_EQ(min_norm_weights(b).alpha, (Vector{1.0}));
}

TEST(MinNorm, EmptyBundleThrows) {
  EXPECT_THROW(min_norm_weights(GradientBundle{}), EmptyBundleError);
  EXPECT_THROW(frank_wolfe_weights(GradientBundle{}), EmptyBundleError);
}

TEST(MinNorm, RaggedBundleThrows) {
  EXPECT_THROW(min_norm_weights(GradientBundle{{{1, 0}, {1}}, {"a", "b"}}), DimensionError);
}

TEST(MinNorm, ThreeObjectivesMatchGridOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> dim(1, 10);
  for (int t = 0; t < 50; ++t) {
    const auto b = random_bundle(3, dim(rng), rng);
    const SimplexWeights w = min_norm_weights(b);
    expect_simplex(w);
    EXPECT_LE(norm2(common_descent(b, w)), oracle::grid_min_norm(b) + 1e-3) << "trial " << t;
  }
}

TEST(MinNorm, NonConflictGuarantee) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> dim(1, 10), count(2, 4);
  for (int t = 0; t < 200; ++t) {
    const auto b = random_bundle(count(rng), dim(rng), rng);
    const Vector g = common_descent(b, min_norm_weights(b));
    double max_sq = 0.0;
    for (const auto& gi : b.grads) max_sq = std::max(max_sq, dot(gi, gi));
    for (const auto& gi : b.grads) EXPECT_GE(dot(g, gi), dot(g, g) - 1e-8 * max_sq) << "trial " << t;
  }
}

TEST(MinNorm, ScaleCovariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int t = 0; t < 50; ++t) {
    const auto b = random_bundle(2 + t % 2, 6, rng);
    auto scaled = b;
    const double lambda = scale(rng);
    for (auto& g : scaled.grads)
      for (double& v : g) v *= lambda;
    const SimplexWeights w = min_norm_weights(b), ws = min_norm_weights(scaled);
    // The argmin may be non-unique when gradients are degenerate; compare objective values too.
    const double n = norm2(common_descent(b, w)), ns = norm2(common_descent(scaled, ws)) / lambda;
    EXPECT_NEAR(n, ns, 1e-6);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], ws[i], 1e-6);
  }
}

TEST(MinNorm, FrankWolfeAgreesWithClosedFormForPairs) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> dim(1, 10);
  for (int t = 0; t < 200; ++t) {
    auto b = random_bundle(2, dim(rng), rng);
    if (t % 4 == 0)  // parallel pair, forces clipping
      for (std::size_t i = 0; i < b.dim(); ++i) b.grads[1][i] = 2.5 * b.grads[0][i];
    const double closed = norm2(common_descent(b, min_norm_weights(b)));
    const double fw = norm2(common_descent(b, frank_wolfe_weights(b)));
    EXPECT_NEAR(closed, fw, 1e-6) << "trial " << t;
  }
}

TEST(MinNorm, Deterministic) {
  std::mt19937_64 rng(5);
  const auto b = random_bundle(3, 8, rng);
  EXPECT_EQ(min_norm_weights(b).alpha, min_norm_weights(b).alpha);
}

TEST(MinNorm, TinyWeightsSnapToZero) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    const SimplexWeights w = min_norm_weights(random_bundle(3, 4, rng));
    for (double a : w.alpha) EXPECT_TRUE(a == 0.0 || a >= 1e-12);
  }
}

TEST(CommonDescent, Examples) {
  const GradientBundle b{{{2, 0}, {0, 1}}, {"a", "b"}};
  EXPECT_EQ(common_descent(b, SimplexWeights{{1.0, 0.0}}), (Vector{2, 0}));
  const Vector g = common_descent(b, SimplexWeights{{0.2, 0.8}});
  EXPECT_NEAR(g[0], 0.4, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
  const GradientBundle zero{{{0, 0}, {0, 0}, {0, 0}}, {"a", "b", "c"}};
  EXPECT_EQ(common_descent(zero, min_norm_weights(zero)), (Vector{0, 0}));
}

TEST(CommonDescent, WeightCountMismatchThrows) {
  const GradientBundle b{{{2, 0}, {0, 1}}, {"a", "b"}};
  EXPECT_THROW(common_descent(b, SimplexWeights{{1.0}}), DimensionError);
}

TEST(ParetoStationary, Examples) {
  EXPECT_TRUE(is_pareto_stationary(GradientBundle{{{1, 0}, {-1, 0}}, {"a", "b"}}));
  EXPECT_FALSE(is_pareto_stationary(GradientBundle{{{1, 0}, {0, 1}}, {"a", "b"}}));
  EXPECT_NEAR(combined_norm(GradientBundle{{{1, 0}, {0, 1}}, {"a", "b"}}), std::sqrt(0.5), 1e-15);
  EXPECT_FALSE(is_pareto_stationary(GradientBundle{{{0.3, 0}}, {"a"}}));
  EXPECT_TRUE(is_pareto_stationary(GradientBundle{{{1, 0}, {-0.5, 0.5}, {-0.5, -0.5}}, {"a", "b", "c"}}));
}
