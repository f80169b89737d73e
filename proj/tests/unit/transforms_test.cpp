#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "infalign/error.hpp"
#include "infalign/transforms.hpp"

using namespace infalign;

TEST_CASE("closed-form transform values") {
  CHECK(eval(Transform::exp_tilt(10), 0.0) == 1.0);
  CHECK(eval(Transform::exp_tilt(-10), 0.0) == -1.0);
  CHECK(eval(Transform::identity(), 0.37) == 0.37);
  CHECK(eval(Transform::log(), 0.0) == doctest::Approx(-13.815510557964274).epsilon(1e-14));
  CHECK(eval(Transform::log(), 0.5) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("compose with calibrated scores") {
  CHECK(compose(Transform::identity(), CalibratedScore(0.375)).value == 0.375);
  CHECK(compose(Transform::exp_tilt(10), CalibratedScore(0.5)).value ==
        doctest::Approx(148.4131591025766).epsilon(1e-14));
  CHECK(compose(Transform::exp_tilt(-10), CalibratedScore(1.0)).value ==
        doctest::Approx(-4.5399929762484854e-5).epsilon(1e-12));
}

TEST_CASE("out-of-domain evaluation throws") {
  CHECK_THROWS_AS(eval(Transform::identity(), -0.1), DomainError);
  CHECK_THROWS_AS(eval(Transform::identity(), 1.5), DomainError);
  CHECK_THROWS_AS(eval(Transform::identity(), std::nan("")), DomainError);
  CHECK_THROWS_AS(CalibratedScore(1.2), DomainError);
}

TEST_CASE("standard transforms are nondecreasing") {
  for (const char* spec : {"identity", "log", "exp:5", "exp:10", "exp:-5", "exp:-10", "exp:0"}) {
    CAPTURE(spec);
    CHECK(is_nondecreasing(parse_transform(spec)));
  }
  Eigen::ArrayXd down(3);
  down << 1, 0, 2;
  CHECK_FALSE(is_nondecreasing(Transform::tabulated(down)));
}

TEST_CASE("tabulated transforms interpolate linearly") {
  Eigen::ArrayXd v(3);
  v << 0, 1, 4;
  const Transform t = Transform::tabulated(v);
  CHECK(t(0.25) == doctest::Approx(0.5));
  CHECK(t(0.75) == doctest::Approx(2.5));
  CHECK(t(1.0) == 4.0);
  // Linear interpolation reproduces a linear function exactly.
  const Transform lin = Transform::tabulated(tabulate(Transform::identity(), 11));
  for (double u = 0; u <= 1; u += 0.013) CHECK(lin(u) == doctest::Approx(u).epsilon(1e-14));
}

TEST_CASE("reflection") {
  const Transform r = reflected(Transform::exp_tilt(3), 2001);
  for (double u : {0.0, 0.2, 0.5, 1.0}) {
    CHECK(r(u) == doctest::Approx(std::exp(3 * (1 - u))).epsilon(1e-5));
  }
}

TEST_CASE("parse_transform") {
  CHECK(parse_transform("log:0.01")(0.0) == doctest::Approx(std::log(0.01)));
  CHECK(parse_transform("exp:-5").label() == "exp:-5");
  CHECK_THROWS_AS(parse_transform("sqrt"), ParseError);
  CHECK_THROWS_AS(parse_transform("exp:abc"), ParseError);
  CHECK_THROWS_AS(parse_transform("log:0"), Error);
}

TEST_CASE("transform tables round trip through CSV") {
  const auto path = std::filesystem::temp_directory_path() / "infalign_table_test.csv";
  const Eigen::ArrayXd values = tabulate(Transform::exp_tilt(-2.5), 101);
  save_transform_table(path, values);
  const Transform t = load_transform_table(path);
  REQUIRE(t.table().size() == 101);
  CHECK((t.table() == values).all());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_transform_table(path), IoError);
}
