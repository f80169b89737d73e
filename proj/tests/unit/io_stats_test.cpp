#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "infalign/error.hpp"
#include "infalign/io.hpp"
#include "infalign/stats.hpp"

using namespace infalign;

TEST_CASE("doubles round trip through text") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double x = i % 3 ? u(rng) : std::ldexp(u(rng), -600);
    CHECK(parse_double(format_double(x)) == x);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK_THROWS_AS(parse_double("1.5x"), ParseError);
  CHECK_THROWS_AS(parse_double(""), ParseError);
}

TEST_CASE("CSV reader") {
  std::istringstream good("u,g\n0,1\n1,2\n");
  const auto rows = read_csv(good, {"u", "g"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][1] == 2.0);
  std::istringstream header("x,g\n0,1\n");
  CHECK_THROWS_AS(read_csv(header, {"u", "g"}), ParseError);
  std::istringstream short_row("u,g\n0,1\n1\n");
  try {
    read_csv(short_row, {"u", "g"});
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("reward records") {
  std::istringstream in(
      "{\"prompt_id\":\"p\",\"response_id\":\"r1\",\"reward\":1.5}\n"
      "\n"
      "{\"prompt_id\":\"p\",\"response_id\":\"r2\",\"reward\":-2}\n");
  const auto recs = read_reward_records(in);
  REQUIRE(recs.size() == 2);
  CHECK(recs[1].reward == -2.0);
  std::istringstream dup(
      "{\"prompt_id\":\"p\",\"response_id\":\"r1\",\"reward\":1}\n"
      "{\"prompt_id\":\"p\",\"response_id\":\"r1\",\"reward\":2}\n");
  try {
    read_reward_records(dup);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream missing("{\"prompt_id\":\"p\",\"reward\":1}\n");
  CHECK_THROWS_AS(read_reward_records(missing), ParseError);
  std::istringstream junk("{not json\n");
  CHECK_THROWS_AS(read_reward_records(junk), ParseError);
}

TEST_CASE("FNV-1a reference vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("running moments merge like a single pass") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(2.0, 3.0);
  stats::RunningMoments all, left, right;
  for (int i = 0; i < 5000; ++i) {
    const double x = n(rng);
    all.add(x);
    (i < 1234 ? left : right).add(x);
  }
  left.merge(right);
  CHECK(left.count == all.count);
  CHECK(left.mean == doctest::Approx(all.mean).epsilon(1e-12));
  CHECK(left.variance() == doctest::Approx(all.variance()).epsilon(1e-10));
  stats::RunningMoments empty;
  empty.merge(all);
  CHECK(empty.mean == all.mean);
}

TEST_CASE("KS statistic and p-value") {
  const std::vector<double> xs = {0.1, 0.2, 0.9};
  // Empirical CDF jumps to 1/3, 2/3, 1; worst gap is 2/3 - 0.2 just after 0.2.
  CHECK(stats::ks_statistic(xs, [](double u) { return u; }) == doctest::Approx(0.4667).epsilon(1e-3));
  // Kolmogorov series at lambda, for large n the correction is negligible.
  auto kolmogorov = [](double lambda) {
    double s = 0;
    for (int k = 1; k < 100; ++k) s += 2 * std::pow(-1, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    return s;
  };
  const std::size_t n = 1'000'000;
  for (double lambda : {0.5, 1.0, 1.36, 1.63}) {
    const double d = lambda / (std::sqrt(double(n)) + 0.12 + 0.11 / std::sqrt(double(n)));
    CHECK(stats::ks_pvalue(d, n) == doctest::Approx(kolmogorov(lambda)).epsilon(1e-9));
  }
  CHECK(stats::ks_pvalue(0.0, 10) == doctest::Approx(1.0));
}

TEST_CASE("exact KS distribution") {
  // n = 1: D = max(U, 1 - U), so P(D < d) = 2d - 1 on [1/2, 1].
  CHECK(stats::ks_cdf_exact(0.8, 1) == doctest::Approx(0.6).epsilon(1e-12));
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u01;
  for (std::size_t n : {2, 5, 30}) {
    const double d = 1.1 / std::sqrt(double(n));
    std::size_t below = 0;
    const std::size_t reps = 200000;
    std::vector<double> xs(n);
    for (std::size_t r = 0; r < reps; ++r) {
      for (double& x : xs) x = u01(rng);
      below += stats::ks_statistic(xs, [](double x) { return x; }) < d;
    }
    const double p = stats::ks_cdf_exact(d, n);
    CAPTURE(n);
    CHECK(std::abs(double(below) / reps - p) <= 4 * std::sqrt(p * (1 - p) / reps));
  }
  // Converges to the Kolmogorov limit for large n.
  CHECK(stats::ks_cdf_exact(1.36 / std::sqrt(1000.0), 1000) == doctest::Approx(0.95).epsilon(0.01));
  CHECK(stats::ks_cdf_exact(0.1, 10) < stats::ks_cdf_exact(0.3, 10));
}
