#include "marginforge/math.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "marginforge/error.hpp"

namespace marginforge {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<Vector> copy;
  copy.reserve(rows.size());
  for (const auto& r : rows) copy.emplace_back(r);
  return from_rows(copy);
}

Matrix Matrix::from_rows(std::span<const Vector> rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) {
      fail(ErrorCode::kDimMismatch, "row " + std::to_string(r) + " has " +
                                        std::to_string(rows[r].size()) + " columns, expected " +
                                        std::to_string(m.cols()));
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kDimMismatch,
         "dot of dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace {

struct CosineParts {
  double value;
  double norm_a;
  double norm_b;
};

CosineParts cosine_parts(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kDimMismatch,
         "cosine of dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na < kZeroNormThreshold || nb < kZeroNormThreshold) {
    fail(ErrorCode::kZeroNorm, "cosine similarity of a zero-norm vector");
  }
  return {dot(a, b) / (na * nb), na, nb};
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  return cosine_parts(a, b).value;
}

GradPair cosine_similarity_with_grad(std::span<const double> a, std::span<const double> b) {
  const auto [s, na, nb] = cosine_parts(a, b);
  GradPair out;
  out.value = s;
  out.grad_a.resize(a.size());
  out.grad_b.resize(b.size());
  const double inv_ab = 1.0 / (na * nb);
  const double inv_aa = 1.0 / (na * na);
  const double inv_bb = 1.0 / (nb * nb);
  for (std::size_t k = 0; k < a.size(); ++k) {
    out.grad_a[k] = b[k] * inv_ab - s * a[k] * inv_aa;
    out.grad_b[k] = a[k] * inv_ab - s * b[k] * inv_bb;
  }
  return out;
}

Vector mean_pool(const Matrix& frames) {
  if (frames.rows() == 0 || frames.cols() == 0) {
    fail(ErrorCode::kEmptyInput, "mean_pool needs at least one frame row");
  }
  Vector out(frames.cols(), 0.0);
  for (std::size_t r = 0; r < frames.rows(); ++r) {
    const auto row = frames.row(r);
    for (std::size_t c = 0; c < frames.cols(); ++c) out[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(frames.rows());
  for (double& v : out) v *= inv;
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) fail(ErrorCode::kInvalidArgument, "finite difference step must be positive");
  Vector point(x.begin(), x.end());
  Vector grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + h;
    const double up = f(point);
    point[i] = orig - h;
    const double down = f(point);
    point[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

bool all_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

Rng::Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

Rng::Rng(std::uint64_t seed, std::string_view stream)
    : engine_(splitmix64(seed ^ splitmix64(fnv1a64(stream)))) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) fail(ErrorCode::kInvalidArgument, "Rng::below(0)");
  // Rejection sampling removes modulo bias.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return static_cast<std::size_t>(draw % bound);
}

}  // namespace marginforge
