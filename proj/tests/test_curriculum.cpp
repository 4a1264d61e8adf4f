#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "lumos/curriculum.hpp"

using namespace lumos;

TEST_SUITE("curriculum") {

TEST_CASE("default schedule visits every level coarse to fine in equal thirds") {
  const Schema schema = default_schema();
  const Schedule s = default_schedule(schema, 300);
  CHECK(s.total_iterations == 300);
  REQUIRE(s.levels.size() == 3);
  CHECK(s.levels[0] == 2);
  CHECK(s.levels[1] == 1);
  CHECK(s.levels[2] == 0);
  REQUIRE(s.boundaries.size() == 3);
  CHECK(s.boundaries[0] == doctest::Approx(1.0 / 3.0));
  CHECK(s.boundaries[1] == doctest::Approx(2.0 / 3.0));
  CHECK(s.boundaries[2] == 1.0);
  CHECK(s.base_lr == doctest::Approx(3e-4));
  CHECK(s.power == doctest::Approx(0.9));
  validate_schedule(s);
}

TEST_CASE("target_level is piecewise constant with half-open stages") {
  const Schedule s = default_schedule(default_schema(), 300);
  CHECK(target_level(0, s) == 2);
  CHECK(target_level(99, s) == 2);
  // frac == boundary belongs to the next stage
  CHECK(target_level(100, s) == 1);
  CHECK(target_level(150, s) == 1);
  CHECK(target_level(199, s) == 1);
  CHECK(target_level(200, s) == 0);
  CHECK(target_level(299, s) == 0);

  // level transitions happen exactly twice and never go coarser
  int prev = target_level(0, s), switches = 0;
  for (int it = 1; it < 300; ++it) {
    const int lv = target_level(it, s);
    CHECK(lv <= prev);
    if (lv != prev) ++switches;
    prev = lv;
  }
  CHECK(switches == 2);
}

TEST_CASE("target_level rejects out-of-range iterations") {
  const Schedule s = default_schedule(default_schema(), 300);
  CHECK_THROWS_AS((void)target_level(-1, s), std::out_of_range);
  CHECK_THROWS_AS((void)target_level(300, s), std::out_of_range);
}

TEST_CASE("poly_lr follows base_lr * (1 - t)^power") {
  Schedule s = default_schedule(default_schema(), 2000);
  CHECK(poly_lr(0, s) == doctest::Approx(3e-4));
  CHECK(poly_lr(2000, s) == 0.0);
  CHECK(poly_lr(500, s) == doctest::Approx(3e-4 * std::pow(0.75, 0.9)));
  CHECK(poly_lr(1000, s) == doctest::Approx(3e-4 * std::pow(0.5, 0.9)));

  double prev = poly_lr(0, s);
  for (int it = 1; it <= 2000; it += 7) {
    const double lr = poly_lr(it, s);
    CHECK(lr < prev);
    CHECK(lr >= 0.0);
    prev = lr;
  }
  CHECK_THROWS_AS((void)poly_lr(-1, s), std::out_of_range);
  CHECK_THROWS_AS((void)poly_lr(2001, s), std::out_of_range);

  s.base_lr = 1e-2;
  s.power = 1.0;
  CHECK(poly_lr(1500, s) == doctest::Approx(1e-2 * 0.25));
}

TEST_CASE("validate_schedule rejects malformed schedules") {
  const Schema schema = default_schema();
  Schedule good = default_schedule(schema, 100);
  validate_schedule(good);

  Schedule s = good;
  s.total_iterations = 0;
  CHECK_THROWS_AS(validate_schedule(s), std::invalid_argument);

  s = good;
  s.boundaries = {0.5, 0.4, 1.0};  // not increasing
  CHECK_THROWS_AS(validate_schedule(s), std::invalid_argument);

  s = good;
  s.boundaries = {0.3, 0.6, 0.9};  // does not end at 1
  CHECK_THROWS_AS(validate_schedule(s), std::invalid_argument);

  s = good;
  s.boundaries = {0.5, 1.0};  // count mismatch with levels
  CHECK_THROWS_AS(validate_schedule(s), std::invalid_argument);

  s = good;
  s.levels = {0, 1, 2};  // fine to coarse is the wrong direction
  CHECK_THROWS_AS(validate_schedule(s), std::invalid_argument);

  s = good;
  s.levels = {2, 1, 1};  // never reaches the base level
  CHECK_THROWS_AS(validate_schedule(s), std::invalid_argument);

  s = good;
  s.boundaries.clear();
  s.levels.clear();
  CHECK_THROWS_AS(validate_schedule(s), std::invalid_argument);
}

TEST_CASE("single-stage schedule stays at base level throughout") {
  Schedule s;
  s.total_iterations = 10;
  s.boundaries = {1.0};
  s.levels = {0};
  validate_schedule(s);
  for (int it = 0; it < 10; ++it) CHECK(target_level(it, s) == 0);
}

}  // TEST_SUITE
