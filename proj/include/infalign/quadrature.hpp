#pragma once

// Quadrature on uniform grids over [0, 1] plus fixed-order Gauss-Legendre
// helpers used for partial cells and endpoint refinement.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <vector>

#include "infalign/error.hpp"

namespace infalign::quad {

template <typename Scalar = double>
struct UniformGrid {
  Eigen::Index size = 0;

  explicit UniformGrid(Eigen::Index m) : size(m) {
    if (m < 3 || m % 2 == 0) {
      throw InvalidParameter("grid size must be odd and >= 3");
    }
  }

  Scalar step() const { return Scalar(1) / Scalar(size - 1); }
  Scalar at(Eigen::Index i) const {
    return i == size - 1 ? Scalar(1) : Scalar(i) * step();
  }
  Eigen::Array<Scalar, Eigen::Dynamic, 1> nodes() const {
    Eigen::Array<Scalar, Eigen::Dynamic, 1> u(size);
    for (Eigen::Index i = 0; i < size; ++i) u[i] = at(i);
    return u;
  }
};

/// Composite Simpson weights for an odd number of equally spaced samples.
template <typename Scalar = double>
Eigen::Array<Scalar, Eigen::Dynamic, 1> simpson_weights(Eigen::Index n,
                                                        Scalar h) {
  assert(n >= 3 && n % 2 == 1);
  Eigen::Array<Scalar, Eigen::Dynamic, 1> w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w[i] = (i == 0 || i == n - 1) ? 1 : (i % 2 == 1 ? 4 : 2);
  }
  return w * (h / Scalar(3));
}

/// Composite Simpson rule over equally spaced samples `y` with spacing `h`.
template <typename Derived>
typename Derived::Scalar simpson(const Eigen::DenseBase<Derived>& y,
                                 typename Derived::Scalar h) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = y.size();
  assert(n >= 3 && n % 2 == 1);
  Scalar odd = 0, even = 0;
  for (Eigen::Index i = 1; i < n - 1; ++i) {
    (i % 2 == 1 ? odd : even) += y[i];
  }
  return h / Scalar(3) * (y[0] + y[n - 1] + Scalar(4) * odd + Scalar(2) * even);
}

/// Running integral from the first sample. Each pair of cells reproduces the
/// Simpson panel exactly; the panel is split between its two cells with the
/// three-point cell rule h/12 (5 y0 + 8 y1 - y2). With `nonnegative` set the
/// split is clamped to [0, panel] so the result is nondecreasing whenever
/// every panel integral is nonnegative. An even number of cells is required.
template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1> cumulative_simpson(
    const Eigen::DenseBase<Derived>& y, typename Derived::Scalar h,
    bool nonnegative = false) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = y.size();
  assert(n >= 3 && n % 2 == 1);
  Eigen::Array<Scalar, Eigen::Dynamic, 1> c(n);
  c[0] = 0;
  for (Eigen::Index i = 0; i + 2 < n; i += 2) {
    Scalar panel = h / Scalar(3) * (y[i] + Scalar(4) * y[i + 1] + y[i + 2]);
    Scalar first = h / Scalar(12) *
                   (Scalar(5) * y[i] + Scalar(8) * y[i + 1] - y[i + 2]);
    if (nonnegative) {
      panel = std::max(panel, Scalar(0));
      first = std::clamp(first, Scalar(0), panel);
    }
    c[i + 1] = c[i] + first;
    c[i + 2] = c[i] + panel;
  }
  return c;
}

/// Integral from each sample to the last one: out[i] = int_{x_i}^{x_end}.
template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1>
reverse_cumulative_simpson(const Eigen::DenseBase<Derived>& y,
                           typename Derived::Scalar h) {
  Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1> forward =
      cumulative_simpson(y, h);
  return forward[forward.size() - 1] - forward;
}

/// 8-point Gauss-Legendre nodes and weights on [-1, 1].
inline constexpr std::array<double, 8> kGaussNodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
    -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
    0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kGaussWeights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
    0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
    0.2223810344533745, 0.1012285362903763};

template <typename Func>
double gauss_legendre(Func&& f, double a, double b) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double sum = 0;
  for (std::size_t k = 0; k < kGaussNodes.size(); ++k) {
    sum += kGaussWeights[k] * f(mid + half * kGaussNodes[k]);
  }
  return half * sum;
}

/// Breakpoints 0 = b_0 < b_1 < ... < b_n = width, geometrically graded
/// toward 0 with the given ratio until the smallest piece is below
/// `min_width`. Used to integrate algebraic endpoint singularities.
inline std::vector<double> graded_breakpoints(double width, double ratio = 0.25,
                                              double min_width = 1e-15) {
  std::vector<double> b{width};
  while (b.back() > min_width) b.push_back(b.back() * ratio);
  b.push_back(0.0);
  return {b.rbegin(), b.rend()};
}

}  // namespace infalign::quad
