#include "infalign/stats.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

#include "infalign/error.hpp"

namespace infalign::stats {

double ks_statistic(std::span<const double> samples,
                    const std::function<double(double)>& cdf) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = double(sorted.size());
  double d = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, double(i + 1) / n - f, f - double(i) / n});
  }
  return d;
}

double ks_pvalue(double d, std::size_t n) {
  const double sqrt_n = std::sqrt(double(n));
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  if (lambda < 1e-3) return 1.0;
  // Q_KS(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)
  double sum = 0, sign = 1;
  for (int k = 1; k <= 200; ++k, sign = -sign) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

bool ks_test_passes(std::span<const double> samples,
                    const std::function<double(double)>& cdf, double alpha) {
  return ks_pvalue(ks_statistic(samples, cdf), samples.size()) >= alpha;
}

double ks_cdf_exact(double d, std::size_t n) {
  // H^n grows like e^n; long double holds it comfortably up to this size.
  if (n == 0 || n > 2000) throw InvalidParameter("exact KS distribution needs 1 <= n <= 2000");
  const double nd = double(n) * d;
  if (nd <= 0.5) return 0.0;
  if (d >= 1.0) return 1.0;
  // Marsaglia, Tsang and Wang (2003): P = n!/n^n (H^n)_{k,k}.
  using Mat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const int k = int(nd) + 1;
  const int m = 2 * k - 1;
  const long double h = k - nd;
  Mat H(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) H(i, j) = i - j + 1 >= 0 ? 1.0L : 0.0L;
  }
  for (int i = 0; i < m; ++i) {
    H(i, 0) -= std::pow(h, i + 1);
    H(m - 1, i) -= std::pow(h, m - i);
  }
  if (2 * h - 1 > 0) H(m - 1, 0) += std::pow(2 * h - 1, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      for (int g = 1; g <= i - j + 1; ++g) H(i, j) /= g;
    }
  }
  Mat result = Mat::Identity(m, m), base = H;
  for (std::size_t e = n; e > 0; e >>= 1) {
    if (e & 1) result = result * base;
    if (e > 1) base = base * base;
  }
  long double scale = 1;
  for (std::size_t i = 1; i <= n; ++i) scale *= (long double)(i) / (long double)(n);
  return std::clamp(double(result(k - 1, k - 1) * scale), 0.0, 1.0);
}

}  // namespace infalign::stats
