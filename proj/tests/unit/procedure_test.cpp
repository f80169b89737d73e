#include <doctest.h>

#include <cmath>
#include <random>

#include "infalign/error.hpp"
#include "infalign/procedure.hpp"

using namespace infalign;

namespace {

// Rewind-and-repeat on a uniform base, simulated draw by draw.
double simulate_rr(std::mt19937_64& rng, double phi, int n, RewindFallback fb) {
  std::uniform_real_distribution<double> u01;
  double best = 0, last = 0;
  for (int k = 0; k < n; ++k) {
    last = u01(rng);
    best = std::max(best, last);
    if (last >= phi) return last;
  }
  return fb == RewindFallback::Last ? last : best;
}

}  // namespace

TEST_CASE("g for the named procedures") {
  CHECK(InferenceProcedure::identity().g(0.3) == 1.0);
  CHECK(InferenceProcedure::best_of(4).g(0.5) == doctest::Approx(0.125));
  CHECK(InferenceProcedure::worst_of(3).g(0.25) == doctest::Approx(0.5625));
  CHECK(InferenceProcedure::best_of(4).total() == doctest::Approx(0.25));
  CHECK(InferenceProcedure::worst_of(4).total() == doctest::Approx(0.25));
}

TEST_CASE("rewind-and-repeat edge thresholds reduce to identity") {
  for (double phi : {0.0, 1.0}) {
    const auto p = InferenceProcedure::rewind_repeat(phi, 8);
    for (double v : {0.0, 0.3, 0.99, 1.0}) CHECK(p.g(v) == doctest::Approx(1.0));
  }
  const Eigen::ArrayXd g = rewind_repeat_g(0.0, 5, 101);
  CHECK((g - 1.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("rewind-and-repeat phi=0.5 N=2") {
  const auto p = InferenceProcedure::rewind_repeat(0.5, 2);
  CHECK(p.g(0.25) == doctest::Approx(0.5));
  CHECK(p.g(0.75) == doctest::Approx(1.5));
  CHECK(p.total() == doctest::Approx(1.0));
  REQUIRE(p.discontinuities().size() == 1);
  CHECK(p.discontinuities()[0] == 0.5);
}

TEST_CASE("rewind-and-repeat g matches a direct simulation") {
  std::mt19937_64 rng(2024);
  constexpr int kDraws = 200000;
  for (auto fb : {RewindFallback::Last, RewindFallback::Best}) {
    for (auto [phi, n] : {std::pair{0.85, 32}, std::pair{0.5, 3}, std::pair{0.3, 2}}) {
      const auto p = InferenceProcedure::rewind_repeat(phi, n, fb);
      std::vector<double> out(kDraws);
      for (double& x : out) x = simulate_rr(rng, phi, n, fb);
      for (double v : {0.1, 0.4, 0.6, 0.9, 0.97}) {
        const double emp = double(std::count_if(out.begin(), out.end(),
                                                [&](double x) { return x <= v; })) / kDraws;
        const double expect = p.cumulative(v) / p.total();
        const double se = std::sqrt(expect * (1 - expect) / kDraws) + 1e-12;
        CAPTURE(phi);
        CAPTURE(n);
        CAPTURE(v);
        CHECK(std::abs(emp - expect) <= 4 * se + 1.0 / kDraws);
      }
    }
  }
}

TEST_CASE("cumulative integrates g") {
  Eigen::ArrayXd table(5);
  table << 0, 1, 3, 1, 0;
  for (const auto& p : {InferenceProcedure::best_of(5), InferenceProcedure::worst_of(3),
                        InferenceProcedure::rewind_repeat(0.4, 6),
                        InferenceProcedure::rewind_repeat(0.7, 4, RewindFallback::Best),
                        InferenceProcedure::custom(table)}) {
    // Midpoint rule with many cells against the closed-form G.
    constexpr int kCells = 200000;
    double acc = 0;
    for (int i = 0; i < kCells; ++i) {
      const double v = (i + 0.5) / kCells;
      acc += p.g(v) / kCells;
      if ((i + 1) % 40000 == 0) {
        CAPTURE(p.label());
        CHECK(p.cumulative((i + 1.0) / kCells) == doctest::Approx(acc).epsilon(1e-6));
      }
    }
    CHECK(p.g_max() >= p.g(0.999) - 1e-12);
  }
}

TEST_CASE("parse_procedure") {
  CHECK(parse_procedure("identity").kind() == ProcedureKind::Identity);
  CHECK(parse_procedure("bon:4").n() == 4);
  CHECK(parse_procedure("won:32").kind() == ProcedureKind::WorstOfN);
  const auto rr = parse_procedure("rr:0.85:32");
  CHECK(rr.threshold() == 0.85);
  CHECK(rr.fallback() == RewindFallback::Last);
  CHECK(parse_procedure("rr:0.85:32", RewindFallback::Best).fallback() == RewindFallback::Best);
  CHECK(parse_procedure("rr:0.5:2:best").fallback() == RewindFallback::Best);
  CHECK(rr.label() == "rr:0.85:32:last");
  CHECK_THROWS_AS(parse_procedure("bon:0"), ParseError);
  CHECK_THROWS_AS(parse_procedure("bon:2.5"), ParseError);
  CHECK_THROWS_AS(parse_procedure("rr:1.5:3"), ParseError);
  CHECK_THROWS_AS(parse_procedure("median:3"), ParseError);
  CHECK_THROWS_AS(parse_procedure("custom:/nonexistent/g.csv"), IoError);
  CHECK_THROWS_AS(InferenceProcedure::best_of(0), InvalidParameter);
}
