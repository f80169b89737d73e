#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "infalign/calibration.hpp"
#include "infalign/error.hpp"

using namespace infalign;

namespace {

// Straight count over the table, no sorting or searching.
double brute_calibrate(const std::vector<double>& table, double r) {
  double s = 0;
  for (double z : table) s += z < r ? 1.0 : (z == r ? 0.5 : 0.0);
  return s / double(table.size());
}

}  // namespace

TEST_CASE("table sorts and keeps duplicates") {
  CHECK(CalibrationTable("p", {3.0, 1.0, 2.0}).sorted_rewards()[0] == 1.0);
  CHECK(CalibrationTable("p", {3.0, 1.0, 2.0}).sorted_rewards()[2] == 3.0);
  CHECK(CalibrationTable("p", {5.0}).size() == 1);
  const CalibrationTable dup("p", {2.0, 2.0});
  REQUIRE(dup.size() == 2);
  CHECK(dup.sorted_rewards()[1] == 2.0);
}

TEST_CASE("build_table filters by prompt") {
  const std::vector<RewardRecord> recs = {
      {"a", "1", 1.0}, {"b", "1", 9.0}, {"a", "2", 3.0}};
  const auto t = build_table(recs, "a");
  CHECK(t.size() == 2);
  CHECK(t.sorted_rewards()[1] == 3.0);
  CHECK_THROWS_AS(build_table(recs, "c"), MissingPrompt);
  const std::vector<RewardRecord> bad = {{"a", "1", std::nan("")}};
  CHECK_THROWS_AS(build_table(bad, "a"), InvalidReward);
  CHECK(build_tables(recs).size() == 2);
}

TEST_CASE("empirical calibration on a small table") {
  const CalibrationTable t("p", {1, 2, 3, 4});
  CHECK(empirical_calibrate(t, 2.5).value() == 0.5);
  CHECK(empirical_calibrate(t, 2.0).value() == 0.375);
  CHECK(empirical_calibrate(t, 5.0).value() == 1.0);
  CHECK(empirical_calibrate(t, 0.0).value() == 0.0);
}

TEST_CASE("calibration matches a brute-force count") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> coarse(0, 5);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> table(1 + rep % 17);
    for (double& z : table) z = rep % 2 ? double(coarse(rng)) : normal(rng);
    const CalibrationTable t("p", table);
    for (int k = 0; k < 10; ++k) {
      const double r = rep % 2 ? double(coarse(rng)) : normal(rng);
      CHECK(empirical_calibrate(t, r).value() == brute_calibrate(table, r));
    }
  }
}

TEST_CASE("calibration is nondecreasing in the reward") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  std::vector<double> table(50);
  for (double& z : table) z = std::round(normal(rng) * 4) / 4;
  const CalibrationTable t("p", table);
  double prev = -1;
  for (double r = -4; r <= 4; r += 0.01) {
    const double c = empirical_calibrate(t, r).value();
    CHECK(c >= prev);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    prev = c;
  }
}

TEST_CASE("calibration through the prompt map") {
  const std::vector<RewardRecord> recs = {{"a", "1", 1.0}, {"a", "2", 3.0}};
  const auto tables = build_tables(recs);
  CHECK(empirical_calibrate(tables, "a", 2.0).value() == 0.5);
  CHECK_THROWS_AS(empirical_calibrate(tables, "zz", 2.0), MissingPrompt);
}

TEST_CASE("DKW bound") {
  CHECK(dkw_error_bound(100, 2.0 * std::exp(-2.0)) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(dkw_error_bound(400, 0.05) == doctest::Approx(0.5 * dkw_error_bound(100, 0.05)));
  CHECK(dkw_error_bound(10, 1.0 - 1e-12) ==
        doctest::Approx(std::sqrt(std::log(2.0) / 20.0)).epsilon(1e-9));
  CHECK_THROWS_AS(dkw_error_bound(10, 0.0), InvalidParameter);
  CHECK_THROWS_AS(dkw_error_bound(10, 1.5), InvalidParameter);
  CHECK_THROWS_AS(dkw_error_bound(0, 0.1), InvalidParameter);
}

TEST_CASE("monotone maps leave calibration unchanged") {
  const CalibrationTable t("p", {0.1, 0.5, 0.5, 2.0, 7.0});
  const std::vector<double> probes = {-1, 0.1, 0.3, 0.5, 1, 2, 7, 8};
  CHECK(check_monotone_invariance(t, [](double u) { return 2 * u + 1; }, probes));
  CHECK(check_monotone_invariance(t, [](double u) { return std::exp(u); }, probes));
  CHECK(check_monotone_invariance(t, [](double u) { return u * u * u; }, probes));
}
