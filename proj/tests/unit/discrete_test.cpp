#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "infalign/discrete.hpp"
#include "infalign/error.hpp"

using namespace infalign;

namespace {

DiscreteInstance two_point() {
  DiscreteInstance inst;
  inst.outcomes = {"a", "b"};
  inst.base_probs = Eigen::Vector2d(0.5, 0.5);
  inst.rewards = Eigen::Vector2d(0.0, 1.0);
  return inst;
}

// W(p > q) - beta KL(p || q) by a plain double loop.
double objective(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::VectorXd& r,
                 double beta) {
  double w = 0, kl = 0;
  for (Eigen::Index y = 0; y < p.size(); ++y) {
    for (Eigen::Index z = 0; z < q.size(); ++z) {
      w += p[y] * q[z] * (r[y] > r[z] ? 1.0 : (r[y] == r[z] ? 0.5 : 0.0));
    }
    if (p[y] > 0) kl += p[y] * std::log(p[y] / q[y]);
  }
  return w - beta * kl;
}

Eigen::VectorXd random_simplex(std::mt19937_64& rng, Eigen::Index n) {
  std::exponential_distribution<double> e;
  Eigen::VectorXd p(n);
  for (auto& x : p) x = e(rng);
  return p / p.sum();
}

}  // namespace

TEST_CASE("calibrated rewards on small alphabets") {
  const auto inst = two_point();
  const Eigen::VectorXd c = exact_calibrated_reward(inst);
  CHECK(c[0] == doctest::Approx(0.25));
  CHECK(c[1] == doctest::Approx(0.75));
  CHECK((calibrated_reward(inst.base_probs, Eigen::Vector2d(3, 3)).array() == 0.5).all());
  const Eigen::Vector3d third = Eigen::Vector3d::Constant(1.0 / 3);
  const Eigen::VectorXd c3 = calibrated_reward(third, Eigen::Vector3d(-1, 0, 4));
  CHECK(c3[0] == doctest::Approx(1.0 / 6));
  CHECK(c3[1] == doctest::Approx(0.5));
  CHECK(c3[2] == doctest::Approx(5.0 / 6));
}

TEST_CASE("exact RLHF solution") {
  const auto inst = two_point();
  const Eigen::VectorXd pi = exact_rlhf(inst, exact_calibrated_reward(inst), 1.0);
  const double a = std::exp(0.25), b = std::exp(0.75);
  CHECK(pi[0] == doctest::Approx(a / (a + b)).epsilon(1e-14));
  CHECK(pi[1] == doctest::Approx(b / (a + b)).epsilon(1e-14));
  CHECK(pi[0] == doctest::Approx(0.37754).epsilon(1e-5));
  CHECK(pi[1] == doctest::Approx(0.62246).epsilon(1e-5));

  const auto inst5 = random_instance(5, 3);
  CHECK((exact_rlhf(inst5, Eigen::VectorXd::Constant(5, 2.0), 0.3) - inst5.base_probs)
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  CHECK((exact_rlhf(inst5, exact_calibrated_reward(inst5), 1e6) - inst5.base_probs)
            .cwiseAbs()
            .maxCoeff() <= 1e-6);
  CHECK_THROWS_AS(exact_rlhf(inst5, Eigen::VectorXd::Zero(3), 1.0), InvalidParameter);
  CHECK_THROWS_AS(exact_rlhf(inst5, Eigen::VectorXd::Zero(5), 0.0), InvalidParameter);
}

TEST_CASE("win rates by enumeration") {
  const Eigen::Vector3d r(1, 2, 3), uniform = Eigen::Vector3d::Constant(1.0 / 3);
  CHECK(exact_win_rate(uniform, uniform, r) == doctest::Approx(0.5));
  CHECK(exact_win_rate(Eigen::Vector3d(0, 0, 1), uniform, r) == doctest::Approx(5.0 / 6));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = random_instance(2 + Eigen::Index(seed % 7), seed);
    std::mt19937_64 rng(seed);
    const Eigen::VectorXd p = random_simplex(rng, inst.size());
    CHECK(win_rate_identity_gap(p, inst.base_probs, inst.rewards) <= 1e-12);
    CHECK(exact_win_rate(p, inst.base_probs, inst.rewards) ==
          doctest::Approx(objective(p, inst.base_probs, inst.rewards, 0.0)).epsilon(1e-13));
  }
}

TEST_CASE("calibrated RLHF maximizes the objective") {
  const auto inst = two_point();
  const auto rep = verify_no_procedure_optimality(inst, 1.0, 10000, 1);
  CHECK(rep.optimal);
  CHECK(rep.comparisons >= 10000);

  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto in = random_instance(2 + Eigen::Index(seed % 7), seed + 100);
    for (double beta : {0.1, 1.0, 10.0}) {
      const Eigen::VectorXd star = exact_rlhf(in, exact_calibrated_reward(in), beta);
      const double best = objective(star, in.base_probs, in.rewards, beta);
      CHECK(identity_objective(in, star, beta) == doctest::Approx(best).epsilon(1e-13));
      for (int k = 0; k < 200; ++k) {
        CHECK(objective(random_simplex(rng, in.size()), in.base_probs, in.rewards, beta) <=
              best + 1e-9);
      }
    }
  }
}

TEST_CASE("huge beta keeps the base policy") {
  const auto inst = random_instance(6, 8);
  const auto rep = verify_no_procedure_optimality(inst, 1e6, 2000, 2);
  CHECK(rep.optimal);
  CHECK(std::abs(rep.objective - 0.5) < 1e-6);
}

TEST_CASE("raw rewards are the wrong tilt") {
  bool strictly_worse = false;
  for (std::uint64_t seed = 0; seed < 50 && !strictly_worse; ++seed) {
    const auto in = random_instance(5, seed + 500);
    const double beta = 0.1;
    const double good =
        identity_objective(in, exact_rlhf(in, exact_calibrated_reward(in), beta), beta);
    const double bad = identity_objective(in, exact_rlhf(in, 100.0 * in.rewards, beta), beta);
    CHECK(good >= bad - 1e-12);
    strictly_worse = good > bad + 1e-6;
  }
  CHECK(strictly_worse);
}

TEST_CASE("coupled iteration for the identity procedure stops after one update") {
  const auto inst = two_point();
  const auto res = coupled_em_identity(inst, 1.0);
  CHECK(res.iterations == 1);
  CHECK(res.residual == 0.0);
  CHECK(res.policy[0] == doctest::Approx(0.37754).epsilon(1e-5));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(3 + Eigen::Index(seed % 5), seed);
    const auto r = coupled_em_identity(in, 0.5);
    CHECK(r.iterations == 1);
    CHECK((r.policy - exact_rlhf(in, exact_calibrated_reward(in), 0.5)).cwiseAbs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("bilevel and multitask minimizers coincide") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto inst = random_log_linear(3 + Eigen::Index(seed % 3), 0.5 + seed, seed);
    const auto rep = verify_multitask_equivalence(inst);
    CHECK(rep.converged);
    CHECK(rep.tv <= 1e-4);
    CHECK(multitask_objective_gap(inst, 100, seed).spread <= 1e-9);
  }
}

TEST_CASE("multitask at huge beta returns the SFT policy") {
  const auto inst = random_log_linear(4, 1e6, 3);
  const auto rep = verify_multitask_equivalence(inst);
  CHECK(total_variation(rep.bilevel_policy, rep.sft_policy) < 1e-4);
  CHECK(total_variation(rep.multitask_policy, rep.sft_policy) < 1e-4);
}

TEST_CASE("the literal KL(pi_theta || pi_sft) regularizer breaks the equivalence") {
  DescentOptions fwd;
  fwd.direction = KlDirection::Forward;
  const auto inst = random_log_linear(4, 1.0, 11);
  const auto rep = verify_multitask_equivalence(inst, fwd);
  CHECK(rep.tv > 1e-4);
  CHECK(multitask_objective_gap(inst, 50, 11, fwd).spread > 1e-3);
}

TEST_CASE("instance files round trip") {
  const auto inst = random_instance(5, 4);
  std::stringstream ss;
  write_instance(ss, inst);
  const auto back = read_instance(ss);
  CHECK(back.outcomes == inst.outcomes);
  CHECK(back.base_probs == inst.base_probs);
  CHECK(back.rewards == inst.rewards);
  std::istringstream bad("outcome,prob,reward\na,1,0\n");
  CHECK_THROWS_AS(read_instance(bad), ParseError);
  DiscreteInstance neg = two_point();
  neg.base_probs = Eigen::Vector2d(1.5, -0.5);
  CHECK_THROWS_AS(neg.validate(), InvalidParameter);
}
