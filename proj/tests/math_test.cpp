#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "marginforge/error.hpp"
#include "marginforge/math.hpp"
#include "test_support.hpp"

using namespace marginforge;

namespace {

void expect_code(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << error_code_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Cosine, HandValues) {
  const Vector x{1, 0}, y{0, 1}, z{1, 1};
  EXPECT_DOUBLE_EQ(cosine_similarity(x, y), 0.0);
  EXPECT_NEAR(cosine_similarity(Vector{1, 2}, Vector{2, 4}), 1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(x, z), 0.70710678118654752, 1e-15);
}

TEST(Cosine, RejectsDegenerateInput) {
  expect_code(ErrorCode::kZeroNorm, [] { cosine_similarity(Vector{0, 0}, Vector{1, 0}); });
  expect_code(ErrorCode::kZeroNorm, [] { cosine_similarity(Vector{1, 0}, Vector{1e-13, 0}); });
  expect_code(ErrorCode::kDimMismatch, [] { cosine_similarity(Vector{1, 0}, Vector{1, 0, 0}); });
  expect_code(ErrorCode::kZeroNorm, [] { cosine_similarity_with_grad(Vector{0, 0}, Vector{1, 0}); });
}

TEST(Cosine, SelfSimilarityAndScaleInvariance) {
  std::mt19937_64 gen(7);
  for (int t = 0; t < 200; ++t) {
    const Vector a = mf_test::random_vector(gen, 6);
    const Vector b = mf_test::random_vector(gen, 6);
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
    Vector scaled = a;
    for (auto& v : scaled) v *= 3.7;
    EXPECT_NEAR(cosine_similarity(scaled, b), cosine_similarity(a, b), 1e-12);
  }
}

TEST(CosineGrad, OrthogonalPair) {
  const GradPair g = cosine_similarity_with_grad(Vector{1, 0}, Vector{0, 1});
  EXPECT_DOUBLE_EQ(g.value, 0.0);
  EXPECT_NEAR(g.grad_a[0], 0.0, 1e-15);
  EXPECT_NEAR(g.grad_a[1], 1.0, 1e-15);
  EXPECT_NEAR(g.grad_b[0], 1.0, 1e-15);
  EXPECT_NEAR(g.grad_b[1], 0.0, 1e-15);
}

TEST(CosineGrad, SelfGradientOrthogonalToInput) {
  const Vector a{0.3, -1.2, 2.5};
  const GradPair g = cosine_similarity_with_grad(a, a);
  EXPECT_NEAR(g.value, 1.0, 1e-12);
  EXPECT_NEAR(dot(g.grad_a, a), 0.0, 1e-10);
}

TEST(CosineGrad, MatchesFiniteDifferences) {
  std::mt19937_64 gen(11);
  for (int t = 0; t < 50; ++t) {
    const Vector a = mf_test::random_vector(gen, 5);
    const Vector b = mf_test::random_vector(gen, 5);
    const GradPair g = cosine_similarity_with_grad(a, b);
    EXPECT_NEAR(dot(g.grad_a, a), 0.0, 1e-10);
    EXPECT_NEAR(dot(g.grad_b, b), 0.0, 1e-10);
    const Vector fd_a = finite_diff_grad([&](std::span<const double> x) { return cosine_similarity(x, b); }, a);
    const Vector fd_b = finite_diff_grad([&](std::span<const double> x) { return cosine_similarity(a, x); }, b);
    EXPECT_LT(mf_test::norm_rel_error(g.grad_a, fd_a), 1e-6);
    EXPECT_LT(mf_test::norm_rel_error(g.grad_b, fd_b), 1e-6);
  }
}

TEST(MeanPool, Examples) {
  EXPECT_EQ(mean_pool(Matrix::from_rows({{1, 3}, {3, 1}})), (Vector{2, 2}));
  EXPECT_EQ(mean_pool(Matrix::from_rows({{5, 7}})), (Vector{5, 7}));
  EXPECT_EQ(mean_pool(Matrix::from_rows({{0, 0}, {1, 1}, {2, 2}})), (Vector{1, 1}));
  expect_code(ErrorCode::kEmptyInput, [] { mean_pool(Matrix(0, 3)); });
}

TEST(MeanPool, RowPermutationInvariant) {
  const Matrix a = Matrix::from_rows({{0.1, 2.0}, {0.7, -1.0}, {0.25, 0.5}});
  const Matrix b = Matrix::from_rows({{0.25, 0.5}, {0.1, 2.0}, {0.7, -1.0}});
  const Vector pa = mean_pool(a), pb = mean_pool(b);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(pa[c], pb[c], 1e-15);
}

TEST(NormalCdf, SymmetryAndQuantile) {
  EXPECT_DOUBLE_EQ(normal_cdf(0.0), 0.5);
  for (double x : {0.1, 0.5, 1.0, 2.3, 4.0, 7.5}) {
    EXPECT_NEAR(normal_cdf(x) + normal_cdf(-x), 1.0, 1e-12);
  }
  // Simpson quadrature of the density over [0, 1.6448536270], computed
  // independently in double precision: 0.950000000005005.
  EXPECT_NEAR(normal_cdf(1.6448536270), 0.950000000005005, 1e-10);
}

TEST(NormalCdf, AgreesWithOwnQuadrature) {
  auto density = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
  for (double x : {-3.0, -1.0, 0.4, 1.2, 2.5}) {
    const int n = 20000;
    const double h = x / n;
    double s = density(0.0) + density(x);
    for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * density(k * h);
    EXPECT_NEAR(normal_cdf(x), 0.5 + s * h / 3.0, 1e-10) << x;
  }
}

TEST(NormalCdf, MonotoneOnGrid) {
  double prev = normal_cdf(-10.0);
  for (int k = 1; k <= 10000; ++k) {
    const double v = normal_cdf(-10.0 + 20.0 * k / 10000.0);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(FiniteDiff, Examples) {
  const Vector x{1, 2};
  const Vector zero = finite_diff_grad([](std::span<const double>) { return 4.2; }, x);
  EXPECT_EQ(zero, (Vector{0, 0}));
  const Vector g = finite_diff_grad([](std::span<const double> v) { return dot(v, v); }, x);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
}

TEST(MatrixType, ShapesAndTranspose) {
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  const Matrix t = m.transposed();
  EXPECT_EQ(t.rows(), 3u);
  EXPECT_DOUBLE_EQ(t(2, 1), 6.0);
  EXPECT_EQ(t.transposed(), m);
}

TEST(Rng, StreamsAreSeededAndIndependent) {
  Rng a(5, "data"), b(5, "data"), c(5, "init"), d(6, "data");
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  EXPECT_NE(x, d.next_u64());
}

TEST(Rng, UniformAndNormalMoments) {
  Rng r(123, "moments");
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng r(9, "shuffle");
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i;
  r.shuffle(v);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 100u);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
}

TEST(Fnv1a, KnownVectors) {
  // Published FNV-1a 64-bit test vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}
