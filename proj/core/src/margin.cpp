#include "marginforge/margin.hpp"

#include <cmath>
#include <string>

#include "marginforge/error.hpp"

namespace marginforge {

void RescaleConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    fail(ErrorCode::kInvalidArgument, "beta must be a finite nonnegative number");
  }
  if (!(var_floor > 0.0)) fail(ErrorCode::kInvalidArgument, "var_floor must be positive");
  if (!std::isfinite(mu)) fail(ErrorCode::kInvalidArgument, "mu must be finite");
}

MarginMatrix MarginMatrix::constant(std::size_t batch_size, double mu) {
  return {Matrix(batch_size, batch_size, mu), mu, 0.0};
}

BatchStats sample_stats(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kEmptyInput, "statistics of an empty sample");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double n = static_cast<double>(values.size());
  const double mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, sq / n};
}

namespace {

std::vector<double> off_diagonal(const Matrix& m) {
  std::vector<double> out;
  out.reserve(m.rows() * (m.rows() - 1));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (i != j) out.push_back(m(i, j));
  return out;
}

}  // namespace

BatchStats batch_stats(const DistanceMatrix& d) {
  if (d.batch_size() < 2) fail(ErrorCode::kInvalidArgument, "batch_stats needs B >= 2");
  return sample_stats(off_diagonal(d.values));
}

double beta_to_stddev(double beta) {
  if (!(beta >= 0.0)) fail(ErrorCode::kInvalidArgument, "beta must be nonnegative");
  if (beta == 0.0) return 0.0;
  constexpr double kTolerance = 1e-10;
  constexpr int kMaxIterations = 200;
  // Coverage of [-beta, beta] shrinks as sigma grows.
  auto coverage = [beta](double sigma) {
    return normal_cdf(beta / sigma) - normal_cdf(-beta / sigma);
  };
  double lo = beta / 10.0;
  double hi = 10.0 * beta;
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < kMaxIterations; ++it) {
    mid = 0.5 * (lo + hi);
    const double c = coverage(mid);
    if (std::abs(c - kMarginCoverage) < kTolerance) break;
    if (c > kMarginCoverage) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return mid;
}

double beta_to_variance(double beta) {
  const double sigma = beta_to_stddev(beta);
  return sigma * sigma;
}

Vector rescale_samples(std::span<const double> samples, const RescaleConfig& cfg) {
  cfg.validate();
  const BatchStats stats = sample_stats(samples);
  Vector out(samples.size(), cfg.mu);
  if (stats.variance <= cfg.var_floor) return out;
  const double scale = beta_to_stddev(cfg.beta) / std::sqrt(stats.variance);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    out[k] = (samples[k] - stats.mean) * scale + cfg.mu;
  }
  return out;
}

MarginMatrix rescale_margins(const DistanceMatrix& d, const RescaleConfig& cfg) {
  const std::size_t n = d.batch_size();
  if (n < 2) fail(ErrorCode::kInvalidArgument, "rescale_margins needs B >= 2");
  const Vector margins = rescale_samples(off_diagonal(d.values), cfg);
  MarginMatrix out{Matrix(n, n, cfg.mu), cfg.mu, cfg.beta};
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) out.values(i, j) = margins[k++];
  return out;
}

}  // namespace marginforge
