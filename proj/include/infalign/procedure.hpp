#pragma once

// Calibrated inference-time procedures, identified by the reweighting
// function g on the policy's own calibrated reward: the served density is
// proportional to pi(y) g(C_pi(y)).

#include <Eigen/Core>

#include <string>
#include <string_view>
#include <vector>

namespace infalign {

enum class ProcedureKind { Identity, BestOfN, WorstOfN, RewindRepeat, Custom };

/// What rewind-and-repeat returns when none of the N draws clears the
/// threshold: the N-th draw, or the best of the N draws.
enum class RewindFallback { Last, Best };

class InferenceProcedure {
 public:
  static InferenceProcedure identity();
  static InferenceProcedure best_of(int n);
  static InferenceProcedure worst_of(int n);
  static InferenceProcedure rewind_repeat(double phi, int n,
                                          RewindFallback fallback = RewindFallback::Last);
  /// g tabulated on a uniform grid over [0,1] (linear interpolation).
  static InferenceProcedure custom(Eigen::ArrayXd g_values,
                                   std::string label = "custom");

  ProcedureKind kind() const { return kind_; }
  int n() const { return n_; }
  double threshold() const { return phi_; }
  RewindFallback fallback() const { return fallback_; }

  /// g(v), v in [0,1].
  double g(double v) const;
  /// G(v) = int_0^v g.
  double cumulative(double v) const;
  double total() const { return cumulative(1.0); }
  /// Points in (0,1) where g jumps.
  std::vector<double> discontinuities() const;

  std::string label() const;
  /// Largest value of g on [0,1].
  double g_max() const;

 private:
  InferenceProcedure(ProcedureKind kind, int n) : kind_(kind), n_(n) {}

  ProcedureKind kind_;
  int n_ = 1;
  double phi_ = 0;
  RewindFallback fallback_ = RewindFallback::Last;
  Eigen::ArrayXd g_table_;
  Eigen::ArrayXd g_cumulative_;
  std::string label_;
};

/// g for rewind-and-repeat with threshold phi and at most N draws, last-draw
/// fallback: 1{v >= phi} (1 - phi^(N-1)) / (1 - phi) + phi^(N-1), tabulated
/// on `m` uniform points. g == 1 when phi is 0 or 1, or N == 1.
Eigen::ArrayXd rewind_repeat_g(double phi, int n, Eigen::Index m = 2001);

/// Parses `identity`, `bon:<N>`, `won:<N>`, `rr:<phi>:<N>[:last|best]` or
/// `custom:<path>` (CSV with header `u,g`). `default_fallback` applies to rr
/// specs that do not name a fallback.
InferenceProcedure parse_procedure(std::string_view spec,
                                   RewindFallback default_fallback = RewindFallback::Last);

RewindFallback parse_rewind_fallback(std::string_view text);

}  // namespace infalign
