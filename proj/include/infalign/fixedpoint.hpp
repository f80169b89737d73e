#pragma once

// Optimized transforms for Best-of-N and Worst-of-N serving, obtained as
// fixed points of the coupled stationarity equations
//   Phi_BoN(u) = -N^2 int_u^1 F(v)^(N-1) v^(N-1) dv
//   Phi_WoN(u) = -N^2 int_u^1 (1-v)^(N-1) (1-F(v))^(N-1) dv
// where F is the CDF of the tilted density exp(Phi / beta) / Z.

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

#include "infalign/analytic.hpp"

namespace infalign {

enum class FixedPointKind { BestOfN, WorstOfN };

struct FixedPointOptions {
  Eigen::Index grid_size = kDefaultGridSize;
  double tolerance = 1e-8;
  int max_iterations = 10000;
  double damping = 0.5;
  // Halve the damping whenever the update residual grows.
  bool adaptive_damping = true;
};

struct FixedPointSolution {
  Transform transform;  // tabulated on the solver grid
  double residual = 0;  // sup-norm of the last mean-centered update
  int iterations = 0;
  bool converged = false;
  FixedPointKind kind = FixedPointKind::BestOfN;
  int n = 1;
  double beta = 1;
};

/// Right-hand side of the stationarity equation for the policy's CDF,
/// tabulated on the policy grid.
Eigen::ArrayXd fixed_point_rhs(FixedPointKind kind, int n, const TiltedPolicy& policy);

/// Damped iteration from Phi = u - 1 (or `initial`, tabulated on the solver
/// grid). Non-convergence is reported through `converged`, not thrown.
FixedPointSolution solve_fixed_point(FixedPointKind kind, int n, double beta,
                                     const FixedPointOptions& options = {},
                                     const std::optional<Eigen::ArrayXd>& initial = {});

FixedPointSolution solve_bon_fp(int n, double beta, const FixedPointOptions& options = {});
FixedPointSolution solve_won_fp(int n, double beta, const FixedPointOptions& options = {});

/// sup |center(RHS(Phi)) - center(Phi)| for any transform on the given grid.
double substitution_residual(const Transform& transform, FixedPointKind kind, int n,
                             double beta, Eigen::Index grid_size = kDefaultGridSize);

struct StationarityReport {
  double residual;             // re-substitution residual
  double max_objective_gain;   // largest objective increase under perturbation
};

/// Re-substitutes the solution and perturbs its density by +-epsilon at
/// mass-preserving pairs of grid nodes, reporting the largest objective gain.
/// The procedure must be Best-of-N or Worst-of-N (Identity counts as N = 1).
StationarityReport verify_stationarity(const FixedPointSolution& solution,
                                       const InferenceProcedure& procedure, double beta,
                                       double epsilon = 1e-4);

/// Solves at each beta and evaluates (KL, win rate) under `procedure`.
/// Throws Error if any solve fails to converge.
std::vector<TradeoffPoint> sweep_fixed_point_curve(FixedPointKind kind, int n,
                                                   const InferenceProcedure& procedure,
                                                   std::span<const double> betas,
                                                   const FixedPointOptions& options = {});

/// beta at which the fixed-point policy has the given KL, with its solution.
std::pair<double, FixedPointSolution> fixed_point_beta_for_kl(
    FixedPointKind kind, int n, double target_kl, const FixedPointOptions& options = {});

std::string fixed_point_label(FixedPointKind kind, int n);

}  // namespace infalign
