#include "infalign/fixedpoint.hpp"

#include <cmath>
#include <limits>

#include "infalign/error.hpp"
#include "infalign/parallel.hpp"

namespace infalign {

namespace {

Eigen::ArrayXd centered(const Eigen::ArrayXd& x) { return x - x.mean(); }

void check_args(int n, double beta, const FixedPointOptions& options) {
  if (n < 1) throw InvalidParameter("N must be >= 1");
  if (!(beta > 0.0)) throw InvalidParameter("beta must be positive");
  if (!(options.tolerance > 0.0)) throw InvalidParameter("tolerance must be positive");
  if (options.max_iterations < 1) throw InvalidParameter("max_iterations must be >= 1");
  if (!(options.damping > 0.0 && options.damping <= 1.0)) {
    throw InvalidParameter("damping must lie in (0,1]");
  }
}

FixedPointKind kind_for(const InferenceProcedure& procedure, int& n) {
  switch (procedure.kind()) {
    case ProcedureKind::Identity:
      n = 1;
      return FixedPointKind::BestOfN;
    case ProcedureKind::BestOfN:
      n = procedure.n();
      return FixedPointKind::BestOfN;
    case ProcedureKind::WorstOfN:
      n = procedure.n();
      return FixedPointKind::WorstOfN;
    default:
      throw InvalidParameter("stationarity is defined for identity, BoN and WoN only");
  }
}

}  // namespace

std::string fixed_point_label(FixedPointKind kind, int n) {
  return (kind == FixedPointKind::BestOfN ? "bon_fp:" : "won_fp:") + std::to_string(n);
}

Eigen::ArrayXd fixed_point_rhs(FixedPointKind kind, int n, const TiltedPolicy& policy) {
  const Eigen::ArrayXd& u = policy.nodes();
  const Eigen::ArrayXd& cdf = policy.cdf_values();
  const Eigen::ArrayXd integrand =
      kind == FixedPointKind::BestOfN
          ? (cdf * u).pow(double(n - 1)).eval()
          : ((1.0 - u) * (1.0 - cdf)).pow(double(n - 1)).eval();
  return -double(n) * double(n) * quad::reverse_cumulative_simpson(integrand, policy.step());
}

FixedPointSolution solve_fixed_point(FixedPointKind kind, int n, double beta,
                                     const FixedPointOptions& options,
                                     const std::optional<Eigen::ArrayXd>& initial) {
  check_args(n, beta, options);
  const quad::UniformGrid<> grid(options.grid_size);
  Eigen::ArrayXd phi = initial ? *initial : (grid.nodes() - 1.0).eval();
  if (phi.size() != grid.size) throw InvalidParameter("initial guess has the wrong size");

  FixedPointSolution sol{Transform::tabulated(phi, fixed_point_label(kind, n)),
                         std::numeric_limits<double>::infinity(), 0, false, kind, n, beta};
  double damping = options.damping;
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= options.max_iterations; ++it) {
    const TiltedPolicy policy(Transform::tabulated(phi), beta, grid.size, Support::Full);
    const Eigen::ArrayXd next = fixed_point_rhs(kind, n, policy);
    const double residual = (centered(next) - centered(phi)).abs().maxCoeff();
    if (options.adaptive_damping && residual > previous) {
      damping = std::max(0.5 * damping, 1e-3);
    }
    previous = residual;
    phi = (1.0 - damping) * phi + damping * next;
    sol.residual = residual;
    sol.iterations = it;
    if (residual <= options.tolerance) {
      sol.converged = true;
      break;
    }
  }
  sol.transform = Transform::tabulated(std::move(phi), fixed_point_label(kind, n));
  return sol;
}

FixedPointSolution solve_bon_fp(int n, double beta, const FixedPointOptions& options) {
  return solve_fixed_point(FixedPointKind::BestOfN, n, beta, options);
}

FixedPointSolution solve_won_fp(int n, double beta, const FixedPointOptions& options) {
  return solve_fixed_point(FixedPointKind::WorstOfN, n, beta, options);
}

double substitution_residual(const Transform& transform, FixedPointKind kind, int n,
                             double beta, Eigen::Index grid_size) {
  const TiltedPolicy policy(transform, beta, grid_size, Support::Full);
  const Eigen::ArrayXd phi = tabulate(transform, grid_size);
  return (centered(fixed_point_rhs(kind, n, policy)) - centered(phi)).abs().maxCoeff();
}

StationarityReport verify_stationarity(const FixedPointSolution& solution,
                                       const InferenceProcedure& procedure, double beta,
                                       double epsilon) {
  int n = 1;
  const FixedPointKind kind = kind_for(procedure, n);
  const Eigen::Index m = solution.transform.table().size();
  StationarityReport report{
      substitution_residual(solution.transform, kind, n, beta, m), 0.0};

  const TiltedPolicy policy(solution.transform, beta, m, Support::Full);
  const Eigen::ArrayXd base = policy.density_values();
  const Eigen::ArrayXd w = quad::simpson_weights<double>(m, policy.step());
  const double reference = grid_objective(base, procedure, beta);

  // Pairs of interior nodes spread across the grid, both parities.
  const std::vector<std::pair<double, double>> fractions = {
      {0.1, 0.9}, {0.25, 0.75}, {0.3, 0.55}, {0.45, 0.95}, {0.05, 0.6}, {0.7, 0.85}};
  double gain = -std::numeric_limits<double>::infinity();
  for (auto [fa, fb] : fractions) {
    for (Eigen::Index shift : {0, 1}) {
      const Eigen::Index i = static_cast<Eigen::Index>(fa * double(m - 1)) + shift;
      const Eigen::Index j = static_cast<Eigen::Index>(fb * double(m - 1));
      const double eps_j = epsilon * w[i] / w[j];
      for (double sign : {1.0, -1.0}) {
        Eigen::ArrayXd f = base;
        f[i] += sign * epsilon;
        f[j] -= sign * eps_j;
        if (f[i] <= 0.0 || f[j] <= 0.0) continue;
        gain = std::max(gain, grid_objective(f, procedure, beta) - reference);
      }
    }
  }
  report.max_objective_gain = std::isfinite(gain) ? gain : 0.0;
  return report;
}

std::vector<TradeoffPoint> sweep_fixed_point_curve(FixedPointKind kind, int n,
                                                   const InferenceProcedure& procedure,
                                                   std::span<const double> betas,
                                                   const FixedPointOptions& options) {
  if (betas.empty()) throw InvalidParameter("beta list is empty");
  std::vector<std::optional<TradeoffPoint>> slots(betas.size());
  parallel_for(betas.size(), [&](std::size_t i) {
    const auto sol = solve_fixed_point(kind, n, betas[i], options);
    if (!sol.converged) {
      throw Error(fixed_point_label(kind, n) + " did not converge at beta=" +
                  std::to_string(betas[i]) + " (residual " + std::to_string(sol.residual) + ")");
    }
    const TiltedPolicy policy(sol.transform, betas[i], options.grid_size);
    slots[i].emplace(TradeoffPoint{betas[i], kl_divergence(policy),
                                   win_rate(policy, procedure), procedure, sol.transform});
  });
  std::vector<TradeoffPoint> points;
  for (auto& s : slots) points.push_back(std::move(*s));
  std::stable_sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return a.kl < b.kl || (a.kl == b.kl && a.beta > b.beta);
  });
  return points;
}

std::pair<double, FixedPointSolution> fixed_point_beta_for_kl(
    FixedPointKind kind, int n, double target_kl, const FixedPointOptions& options) {
  if (!(target_kl > 0.0)) throw InvalidParameter("target KL must be positive");
  // Phi spans at most N^2, so the interesting betas sit around that scale.
  const double center = std::log(double(n) * double(n));
  double lo = center - 12.0, hi = center + 8.0;
  std::optional<Eigen::ArrayXd> warm;
  auto solve_at = [&](double log_beta) {
    auto sol = solve_fixed_point(kind, n, std::exp(log_beta), options, warm);
    if (!sol.converged) {
      // Retry from the default start before giving up.
      sol = solve_fixed_point(kind, n, std::exp(log_beta), options);
      if (!sol.converged) {
        throw Error(fixed_point_label(kind, n) + " did not converge at beta=" +
                    std::to_string(std::exp(log_beta)));
      }
    }
    warm = sol.transform.table();
    const double kl =
        kl_divergence(TiltedPolicy(sol.transform, std::exp(log_beta), options.grid_size));
    return std::pair{kl, sol};
  };
  for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    (solve_at(mid).first > target_kl ? lo : hi) = mid;
  }
  const double log_beta = 0.5 * (lo + hi);
  auto [kl, sol] = solve_at(log_beta);
  if (std::abs(kl - target_kl) > 1e-6 * std::max(1.0, target_kl)) {
    throw InvalidParameter("target KL is not attainable for " + fixed_point_label(kind, n));
  }
  return {std::exp(log_beta), std::move(sol)};
}

}  // namespace infalign
