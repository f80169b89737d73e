#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace infalign::stats {

/// Streaming mean and variance, mergeable (Chan et al. pairwise update).
struct RunningMoments {
  std::size_t count = 0;
  double mean = 0;
  double m2 = 0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / double(count);
    m2 += delta * (x - mean);
  }

  void merge(const RunningMoments& other) {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double n = double(count) + double(other.count);
    const double delta = other.mean - mean;
    mean += delta * double(other.count) / n;
    m2 += other.m2 + delta * delta * double(count) * double(other.count) / n;
    count += other.count;
  }

  double variance() const { return count > 1 ? m2 / double(count - 1) : 0.0; }
};

/// sup_x |F_n(x) - cdf(x)| for the empirical CDF of `samples`.
double ks_statistic(std::span<const double> samples,
                    const std::function<double(double)>& cdf);

/// Asymptotic p-value of the one-sample KS statistic `d` with `n` samples,
/// using Stephens' small-sample correction.
double ks_pvalue(double d, std::size_t n);

/// Exact P(D_n < d) for the one-sample KS statistic of a continuous CDF,
/// 1 <= n <= 2000 (Marsaglia-Tsang-Wang recursion).
double ks_cdf_exact(double d, std::size_t n);

/// True when the KS test does not reject at significance `alpha`.
bool ks_test_passes(std::span<const double> samples,
                    const std::function<double(double)>& cdf, double alpha);

}  // namespace infalign::stats
