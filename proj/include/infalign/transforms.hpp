#pragma once

// Reward transformations applied on top of calibrated rewards.

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <string_view>

#include "infalign/calibration.hpp"

namespace infalign {

inline constexpr double kDefaultLogEpsilon = 1e-6;
inline constexpr Eigen::Index kDefaultTableSize = 2001;

enum class TransformKind { Identity, Log, ExpTilt, Tabulated };

struct TransformedReward {
  double value = 0;
};

/// A map [0,1] -> R. Closed-form kinds carry one parameter (the log clamp
/// epsilon or the tilt t); tabulated transforms hold values on a uniform grid
/// over [0,1] and interpolate linearly.
class Transform {
 public:
  static Transform identity();
  static Transform log(double epsilon = kDefaultLogEpsilon);
  /// sign(t) * exp(t u), with sign(0) = +1.
  static Transform exp_tilt(double t);
  static Transform tabulated(Eigen::ArrayXd values, std::string label = "table");
  static Transform constant(double c);

  TransformKind kind() const { return kind_; }
  double parameter() const { return param_; }
  const Eigen::ArrayXd& table() const { return table_; }

  /// Unchecked evaluation; callers guarantee u in [0,1].
  double operator()(double u) const;

  /// Short spec-style label: identity, log, exp:10, or the table label.
  std::string label() const;

 private:
  Transform(TransformKind kind, double param) : kind_(kind), param_(param) {}

  TransformKind kind_;
  double param_ = 0;
  Eigen::ArrayXd table_;
  std::string label_;
};

/// Checked evaluation. Throws DomainError for u outside [0,1] or NaN.
double eval(const Transform& transform, double u);

/// Evaluate at every entry of `u` (entries must lie in [0,1]).
template <typename Derived>
Eigen::ArrayXd eval(const Transform& transform,
                    const Eigen::ArrayBase<Derived>& u) {
  Eigen::ArrayXd out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = eval(transform, u[i]);
  return out;
}

TransformedReward compose(const Transform& transform, CalibratedScore score);

/// Tabulate `transform` on `m` uniform points.
Eigen::ArrayXd tabulate(const Transform& transform,
                        Eigen::Index m = kDefaultTableSize);

/// Phi'(u) = Phi(1 - u), tabulated on `m` points.
Transform reflected(const Transform& transform,
                    Eigen::Index m = kDefaultTableSize);

/// Checks Phi(u_{i+1}) >= Phi(u_i) on `samples` uniform points.
bool is_nondecreasing(const Transform& transform, Eigen::Index samples = 10001);

/// Parses `identity`, `log`, `log:<eps>`, `exp:<t>` or `table:<path>`.
Transform parse_transform(std::string_view spec);

/// CSV with header `u,phi` on a uniform grid over [0,1].
Transform load_transform_table(const std::filesystem::path& path);
void save_transform_table(const std::filesystem::path& path,
                          const Eigen::ArrayXd& values);

}  // namespace infalign
