#include <doctest.h>

#include <cmath>

#include "infalign/error.hpp"
#include "infalign/fixedpoint.hpp"

using namespace infalign;

namespace {

Eigen::ArrayXd centered(const Eigen::ArrayXd& x) { return x - x.mean(); }

}  // namespace

TEST_CASE("N=1 solutions are u - 1") {
  for (auto kind : {FixedPointKind::BestOfN, FixedPointKind::WorstOfN}) {
    for (double beta : {0.05, 1.0, 20.0}) {
      const auto sol = solve_fixed_point(kind, 1, beta);
      REQUIRE(sol.converged);
      const Eigen::ArrayXd u = Eigen::ArrayXd::LinSpaced(sol.transform.table().size(), 0, 1);
      CHECK((centered(sol.transform.table()) - centered(u - 1.0)).abs().maxCoeff() < 1e-8);
      // Same tilted density as the identity transform.
      const TiltedPolicy a(sol.transform, beta), b(Transform::identity(), beta);
      for (double x : {0.0, 0.25, 0.6, 1.0}) {
        CHECK(std::abs(a.density(x) - b.density(x)) < 1e-10 * std::max(1.0, b.density(x)));
      }
    }
  }
}

TEST_CASE("solutions are nondecreasing and bounded by N^2") {
  for (auto kind : {FixedPointKind::BestOfN, FixedPointKind::WorstOfN}) {
    for (int n : {2, 4}) {
      for (double beta : {0.1, 1.0}) {
        const auto sol = solve_fixed_point(kind, n, beta);
        REQUIRE(sol.converged);
        CHECK(sol.residual <= FixedPointOptions{}.tolerance);
        const Eigen::ArrayXd& phi = sol.transform.table();
        CHECK(phi.allFinite());
        CHECK(is_nondecreasing(sol.transform));
        CHECK(phi.minCoeff() >= -double(n * n) - 1e-9);
        CHECK(phi.maxCoeff() <= 1e-9);
        CHECK(substitution_residual(sol.transform, kind, n, beta) <=
              2 * FixedPointOptions{}.tolerance);
      }
    }
  }
}

TEST_CASE("identity is not a fixed point for N=4") {
  CHECK(substitution_residual(Transform::identity(), FixedPointKind::BestOfN, 4, 0.1) > 0.01);
  CHECK(substitution_residual(Transform::identity(), FixedPointKind::WorstOfN, 4, 0.1) > 0.01);
}

TEST_CASE("perturbing a fixed point's density gains at most second order") {
  const double beta = 0.5;
  const auto bon = solve_bon_fp(4, beta);
  const auto won = solve_won_fp(4, beta);
  REQUIRE(bon.converged);
  REQUIRE(won.converged);
  const auto rb = verify_stationarity(bon, InferenceProcedure::best_of(4), beta, 1e-4);
  const auto rw = verify_stationarity(won, InferenceProcedure::worst_of(4), beta, 1e-4);
  CHECK(rb.residual <= 2 * FixedPointOptions{}.tolerance);
  CHECK(rb.max_objective_gain <= 1e-7);
  CHECK(rw.max_objective_gain <= 1e-7);
  // The identity transform is not stationary for Best-of-4: its gains are
  // first order in epsilon, so shrinking epsilon tenfold shrinks them tenfold.
  FixedPointSolution fake = bon;
  fake.transform = Transform::tabulated(tabulate(Transform::identity(), 2001));
  const double g4 = verify_stationarity(fake, InferenceProcedure::best_of(4), beta, 1e-4)
                        .max_objective_gain;
  const double g5 = verify_stationarity(fake, InferenceProcedure::best_of(4), beta, 1e-5)
                        .max_objective_gain;
  CHECK(g4 > 100 * rb.max_objective_gain);
  CHECK(g4 / g5 == doctest::Approx(10.0).epsilon(0.05));
  CHECK_THROWS_AS(verify_stationarity(bon, InferenceProcedure::rewind_repeat(0.5, 4), beta),
                  InvalidParameter);
}

TEST_CASE("bon_fp beats the transform suite on the objective") {
  const double beta = 0.1;
  const auto sol = solve_bon_fp(4, beta);
  REQUIRE(sol.converged);
  const auto proc = InferenceProcedure::best_of(4);
  const double best = infalign_objective(TiltedPolicy(sol.transform, beta), proc, beta);
  for (const char* spec : {"identity", "log", "exp:5", "exp:10", "exp:-5", "exp:-10"}) {
    CAPTURE(spec);
    CHECK(best >= infalign_objective(TiltedPolicy(parse_transform(spec), beta), proc, beta) - 1e-4);
  }
}

TEST_CASE("fixed points win at matched KL") {
  const FixedPointOptions opt;
  for (auto [kind, rivals] :
       {std::pair{FixedPointKind::BestOfN, std::vector<const char*>{"identity", "log", "exp:10"}},
        std::pair{FixedPointKind::WorstOfN,
                  std::vector<const char*>{"identity", "log", "exp:-10"}}}) {
    const auto proc = kind == FixedPointKind::BestOfN ? InferenceProcedure::best_of(4)
                                                      : InferenceProcedure::worst_of(4);
    const auto sol = solve_fixed_point(kind, 4, 0.1, opt);
    REQUIRE(sol.converged);
    const TiltedPolicy fp(sol.transform, 0.1);
    const double kl = kl_divergence(fp);
    const double w = win_rate(fp, proc);
    for (const char* spec : rivals) {
      CAPTURE(spec);
      const Transform t = parse_transform(spec);
      CHECK(w >= win_rate(TiltedPolicy(t, beta_for_kl(t, kl)), proc) - 1e-4);
    }
  }
}

TEST_CASE("non-convergence is reported, not thrown") {
  FixedPointOptions opt;
  opt.max_iterations = 2;
  const auto sol = solve_bon_fp(4, 0.1, opt);
  CHECK_FALSE(sol.converged);
  CHECK(sol.iterations == 2);
  CHECK(sol.residual > opt.tolerance);
}

TEST_CASE("fixed-point arguments are validated") {
  FixedPointOptions bad;
  bad.damping = 0;
  CHECK_THROWS_AS(solve_bon_fp(4, 1.0, bad), InvalidParameter);
  CHECK_THROWS_AS(solve_bon_fp(0, 1.0), InvalidParameter);
  CHECK_THROWS_AS(solve_won_fp(2, -1.0), InvalidParameter);
}

TEST_CASE("fixed_point_beta_for_kl") {
  const auto [beta, sol] = fixed_point_beta_for_kl(FixedPointKind::BestOfN, 4, 0.5);
  CHECK(sol.converged);
  CHECK(kl_divergence(TiltedPolicy(sol.transform, beta)) == doctest::Approx(0.5).epsilon(1e-6));
}
