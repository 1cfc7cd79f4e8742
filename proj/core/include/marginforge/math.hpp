#ifndef MARGINFORGE_MATH_HPP_
#define MARGINFORGE_MATH_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace marginforge {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_rows(std::span<const Vector> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Value and gradients of a cosine similarity with respect to both inputs.
struct GradPair {
  double value = 0.0;
  Vector grad_a;
  Vector grad_b;
};

// Norms below this are treated as degenerate input.
inline constexpr double kZeroNormThreshold = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

double cosine_similarity(std::span<const double> a, std::span<const double> b);
GradPair cosine_similarity_with_grad(std::span<const double> a, std::span<const double> b);

/// Per-column arithmetic mean of the rows of `frames`.
Vector mean_pool(const Matrix& frames);

/// Standard normal CDF, absolute error well below 1e-10.
double normal_cdf(double x);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient of `f` at `x` with step `h`.
Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double h = 1e-5);

bool all_finite(std::span<const double> values);

/// Seeded random stream. Each named sub-stream ("data", "init", "shuffle")
/// gets an independent engine derived from the run seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, std::string_view stream);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1), 53 random mantissa bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    // Fisher-Yates with our own index draw so the order is library independent.
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace marginforge

#endif  // MARGINFORGE_MATH_HPP_
