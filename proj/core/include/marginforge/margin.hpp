#ifndef MARGINFORGE_MARGIN_HPP_
#define MARGINFORGE_MARGIN_HPP_

#include <span>

#include "marginforge/experts.hpp"
#include "marginforge/math.hpp"

namespace marginforge {

// Target probability mass of the margin distribution inside [mu - beta, mu + beta].
inline constexpr double kMarginCoverage = 0.90;

struct RescaleConfig {
  double mu = 0.05;        // target mean, set to the hard margin
  double beta = 0.04;      // half-width of the 90% interval
  double var_floor = 1e-12;

  void validate() const;
};

/// Adaptive margins for one expert. Diagonal holds mu and is never read.
struct MarginMatrix {
  Matrix values;
  double mu = 0.0;
  double beta = 0.0;

  std::size_t batch_size() const noexcept { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }

  /// Every entry equal to `mu`; the shape the rescale degenerates to as beta -> 0.
  static MarginMatrix constant(std::size_t batch_size, double mu);
};

struct BatchStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance
};

/// Mean and population variance over the B(B-1) off-diagonal entries.
BatchStats batch_stats(const DistanceMatrix& d);
BatchStats sample_stats(std::span<const double> values);

/// sigma such that N(mu, sigma^2) has 90% of its mass within mu +/- beta,
/// found by bisection on the coverage.
double beta_to_stddev(double beta);
/// U(beta) = beta_to_stddev(beta)^2.
double beta_to_variance(double beta);

/// Affine map of raw samples onto mean `mu` and variance U(beta); falls back
/// to a constant `mu` when the sample variance is at or below the floor.
Vector rescale_samples(std::span<const double> samples, const RescaleConfig& cfg);

MarginMatrix rescale_margins(const DistanceMatrix& d, const RescaleConfig& cfg);

}  // namespace marginforge

#endif  // MARGINFORGE_MARGIN_HPP_
