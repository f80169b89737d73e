#pragma once

// Exact tradeoff computation for KL-regularized alignment in calibrated
// reward space. The aligned policy for transform Phi and regularizer beta has
// density f(u) proportional to exp(Phi(u) / beta) on [0,1] against a uniform
// base policy; KL and inference-time win rates are integrals of f and its CDF.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "infalign/procedure.hpp"
#include "infalign/quadrature.hpp"
#include "infalign/transforms.hpp"

namespace infalign {

inline constexpr Eigen::Index kDefaultGridSize = 2001;

/// Density, CDF and log density of a tilted policy at one point.
struct PolicySample {
  double u;
  double density;
  double cdf;
  double log_density;
};

/// Where the grid of a tilted policy lives. Adaptive narrows it to a window
/// [a, b] with at most 1e-16 of the mass on either side; Full always spans
/// [0,1].
enum class Support { Adaptive, Full };

/// The tilted policy f = exp(Phi / beta) / Z tabulated on M uniform points.
///
/// Integrals use composite Simpson on the grid, except on the first 16 cells
/// where graded 8-point Gauss-Legendre pieces resolve algebraic behaviour at
/// u = 0 (the log transform gives f ~ u^(1/beta)). Phi is shifted by its
/// maximum before exponentiation so the unnormalized weights never overflow.
/// Parts of [0,1] outside the grid window are integrated with composite
/// Gauss-Legendre, taking F = 0 below the window and F = 1 above it.
/// Adaptive policies also subdivide every cell when log f is steep or the
/// density is large, so grid_size() may exceed the requested M.
class TiltedPolicy {
 public:
  TiltedPolicy(Transform transform, double beta,
               Eigen::Index grid_size = kDefaultGridSize,
               Support support = Support::Adaptive);

  const Transform& transform() const { return transform_; }
  double beta() const { return beta_; }
  Eigen::Index grid_size() const { return nodes_.size(); }
  double step() const { return step_; }
  double support_lo() const { return lo_; }
  double support_hi() const { return hi_; }

  const Eigen::ArrayXd& nodes() const { return nodes_; }
  const Eigen::ArrayXd& density_values() const { return density_; }
  const Eigen::ArrayXd& cdf_values() const { return cdf_; }

  /// log int_0^1 exp(Phi / beta).
  double log_normalizer() const { return shift_ / beta_ + log_shifted_z_; }

  double log_density(double u) const;
  double density(double u) const;
  /// F(u) at any u in [0,1].
  double cdf(double u) const;
  /// Inverse of the tabulated CDF with linear interpolation between nodes.
  double quantile(double v) const;
  /// Piecewise-linear CDF through the nodes; the exact inverse of quantile().
  double cdf_linear(double u) const;
  PolicySample sample_at(double u) const;

  /// int_0^1 fn(sample) du.
  template <typename Fn>
  double integrate(Fn&& fn) const;
  /// int_lo^hi fn(sample) du for 0 <= lo <= hi <= 1.
  template <typename Fn>
  double integrate(Fn&& fn, double lo, double hi) const;

 private:
  double shifted_log_weight(double u) const {
    return (transform_(u) - shift_) / beta_;
  }
  Eigen::Index cell_of(double u) const;
  template <typename Fn>
  double integrate_gauss(Fn& fn, double a, double b) const;
  template <typename Fn>
  double integrate_outside(Fn& fn, double a, double b) const;
  template <typename Fn>
  double integrate_tail(Fn& fn, double a, double b) const;

  Transform transform_;
  double beta_;
  double step_;
  double lo_ = 0.0, hi_ = 1.0;
  double shift_ = 0;
  double log_shifted_z_ = 0;
  Eigen::Index region_cells_ = 0;
  Eigen::ArrayXd nodes_, density_, cdf_, log_density_;
  Eigen::ArrayXd tail_weights_;
  std::vector<double> region_breaks_, region_break_cdf_;
  std::vector<PolicySample> region_samples_;
  std::vector<double> region_weights_;
  static constexpr std::size_t kQuantileBuckets = 4096;
  std::vector<Eigen::Index> quantile_bucket_;
};

/// Throws InvalidParameter for beta <= 0 and for an even or too small grid.
TiltedPolicy build_tilted(const Transform& transform, double beta,
                          Eigen::Index grid_size = kDefaultGridSize);

/// D_KL(aligned || base) in nats, clamped at 0.
double kl_divergence(const TiltedPolicy& policy);

/// Inference-time win rate of the aligned policy against the base policy when
/// both are served through `procedure`.
double win_rate(const TiltedPolicy& policy, const InferenceProcedure& procedure);

/// win_rate - beta * KL. `beta` must equal the policy's beta.
double infalign_objective(const TiltedPolicy& policy,
                          const InferenceProcedure& procedure, double beta);

struct TradeoffPoint {
  double beta;
  double kl;
  double win_rate;
  InferenceProcedure procedure;
  Transform transform;
};

/// One point per beta, sorted by KL ascending.
std::vector<TradeoffPoint> sweep_curve(const Transform& transform,
                                       const InferenceProcedure& procedure,
                                       std::span<const double> betas,
                                       Eigen::Index grid_size = kDefaultGridSize);

/// `count` values log-spaced over [lo, hi].
std::vector<double> log_spaced(double lo, double hi, int count);

/// max Phi - min Phi over the grid (1 for a constant transform). Used to put
/// transforms of very different scale on a common beta axis.
double transform_span(const Transform& transform,
                      Eigen::Index grid_size = kDefaultGridSize);

/// beta whose aligned policy has the given KL, by bisection on log beta.
/// Throws InvalidParameter when the target is not attainable.
double beta_for_kl(const Transform& transform, double target_kl,
                   Eigen::Index grid_size = kDefaultGridSize);

/// Objective of an arbitrary density tabulated on a uniform odd-size grid,
/// evaluated with plain Simpson quadrature. Used to probe stationarity of
/// fixed points by perturbing their densities.
double grid_objective(const Eigen::ArrayXd& density,
                      const InferenceProcedure& procedure, double beta);

// ---------------------------------------------------------------------------

template <typename Fn>
double TiltedPolicy::integrate_gauss(Fn& fn, double a, double b) const {
  return quad::gauss_legendre([&](double x) { return fn(sample_at(x)); }, a, b);
}

template <typename Fn>
double TiltedPolicy::integrate_tail(Fn& fn, double a, double b) const {
  const Eigen::Index m = nodes_.size();
  const double eps = 1e-12;
  Eigen::Index i0 = static_cast<Eigen::Index>(std::ceil((a - lo_) / step_ - eps));
  Eigen::Index i1 = static_cast<Eigen::Index>(std::floor((b - lo_) / step_ + eps));
  i0 = std::clamp<Eigen::Index>(i0, 0, m - 1);
  i1 = std::clamp<Eigen::Index>(i1, 0, m - 1);
  if (i0 >= i1) return integrate_gauss(fn, a, b);
  double total = 0;
  if (a < nodes_[i0]) total += integrate_gauss(fn, a, nodes_[i0]);
  if (b > nodes_[i1]) total += integrate_gauss(fn, nodes_[i1], b);
  if ((i1 - i0) % 2 == 1) {
    total += integrate_gauss(fn, nodes_[i1 - 1], nodes_[i1]);
    --i1;
  }
  if (i1 > i0) {
    double odd = 0, even = 0;
    for (Eigen::Index i = i0 + 1; i < i1; ++i) {
      const double v = fn(PolicySample{nodes_[i], density_[i], cdf_[i], log_density_[i]});
      ((i - i0) % 2 == 1 ? odd : even) += v;
    }
    const double ends =
        fn(PolicySample{nodes_[i0], density_[i0], cdf_[i0], log_density_[i0]}) +
        fn(PolicySample{nodes_[i1], density_[i1], cdf_[i1], log_density_[i1]});
    total += step_ / 3.0 * (ends + 4.0 * odd + 2.0 * even);
  }
  return total;
}

template <typename Fn>
double TiltedPolicy::integrate_outside(Fn& fn, double a, double b) const {
  constexpr int kPieces = 16;
  double total = 0;
  const double h = (b - a) / kPieces;
  for (int k = 0; k < kPieces; ++k) {
    total += integrate_gauss(fn, a + k * h, k == kPieces - 1 ? b : a + (k + 1) * h);
  }
  return total;
}

template <typename Fn>
double TiltedPolicy::integrate(Fn&& fn) const {
  double total = 0;
  if (lo_ > 0.0) total += integrate_outside(fn, 0.0, lo_);
  if (hi_ < 1.0) total += integrate_outside(fn, hi_, 1.0);
  for (std::size_t k = 0; k < region_samples_.size(); ++k) {
    total += region_weights_[k] * fn(region_samples_[k]);
  }
  const Eigen::Index m = nodes_.size();
  for (Eigen::Index i = region_cells_; i < m; ++i) {
    const double w = tail_weights_[i - region_cells_];
    if (w != 0.0) {
      total += w * fn(PolicySample{nodes_[i], density_[i], cdf_[i], log_density_[i]});
    }
  }
  return total;
}

template <typename Fn>
double TiltedPolicy::integrate(Fn&& fn, double lo, double hi) const {
  if (lo <= 0.0 && hi >= 1.0) return integrate(fn);
  double total = 0;
  if (lo < lo_) total += integrate_outside(fn, std::max(lo, 0.0), std::min(hi, lo_));
  if (hi > hi_) total += integrate_outside(fn, std::max(lo, hi_), std::min(hi, 1.0));
  const double region_end = nodes_[region_cells_];
  const double a = std::max(lo, lo_), b = std::min(hi, region_end);
  for (std::size_t k = 0; a < b && k + 1 < region_breaks_.size(); ++k) {
    const double pa = std::max(a, region_breaks_[k]);
    const double pb = std::min(b, region_breaks_[k + 1]);
    if (pa < pb) total += integrate_gauss(fn, pa, pb);
  }
  const double ta = std::max(lo, region_end), tb = std::min(hi, hi_);
  if (ta < tb) total += integrate_tail(fn, ta, tb);
  return total;
}

}  // namespace infalign
