#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "nte/common.hpp"
#include "nte/splines.hpp"

using namespace nte;

namespace {
SplineSpec unit_knots() {
  SplineSpec spec;
  spec.knots = {0.0, 1.0, 2.0, 3.0};
  return spec;
}
}  // namespace

TEST_CASE("rcs basis hand values at knots (0,1,2,3)") {
  // Harrell form with (t_m - t_1)^2 = 9 normalization. At x = 1.5 only the
  // first two cubes are active: C_1 = 1.5^3 = 3.375, C_2 = 0.5^3 = 0.125.
  const SplineSpec spec = unit_knots();
  REQUIRE(spec.basis_cols() == 3);
  std::vector<double> b = rcs_basis(1.5, spec);
  CHECK(b[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(b[1] == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(b[2] == doctest::Approx(0.125 / 9.0).epsilon(1e-15));
}

TEST_CASE("rcs basis is zero left of the first knot") {
  const SplineSpec spec = unit_knots();
  for (double x : {-3.0, -0.5, 0.0}) {
    std::vector<double> b = rcs_basis(x, spec);
    CHECK(b[0] == x);
    CHECK(b[1] == 0.0);
    CHECK(b[2] == 0.0);
  }
}

TEST_CASE("rcs basis is exactly linear beyond the boundary knots") {
  const SplineSpec spec = unit_knots();
  // Second difference of each basis column vanishes when the whole stencil
  // sits in a tail region.
  for (double x : {3.0, 4.5, 10.0}) {
    std::vector<double> lo = rcs_basis(x, spec);
    std::vector<double> mid = rcs_basis(x + 0.7, spec);
    std::vector<double> hi = rcs_basis(x + 1.4, spec);
    for (std::size_t c = 0; c < lo.size(); ++c) {
      CHECK(std::fabs(lo[c] - 2.0 * mid[c] + hi[c]) < 1e-12);
    }
  }
}

TEST_CASE("rcs basis is C2 at the knots") {
  const SplineSpec spec = unit_knots();
  const double eps = 1e-5;
  for (double t : spec.knots) {
    std::vector<double> lo = rcs_basis(t - eps, spec);
    std::vector<double> hi = rcs_basis(t + eps, spec);
    std::vector<double> lo2 = rcs_basis(t - 2.0 * eps, spec);
    std::vector<double> hi2 = rcs_basis(t + 2.0 * eps, spec);
    std::vector<double> at = rcs_basis(t, spec);
    for (std::size_t c = 0; c < at.size(); ++c) {
      // value continuity
      CHECK(std::fabs(hi[c] - lo[c]) < 1e-4);
      // one-sided first derivatives agree to O(eps)
      const double dlo = (at[c] - lo[c]) / eps;
      const double dhi = (hi[c] - at[c]) / eps;
      CHECK(std::fabs(dhi - dlo) < 1e-4);
      // one-sided second derivatives agree to O(eps)
      const double d2lo = (at[c] - 2.0 * lo[c] + lo2[c]) / (eps * eps);
      const double d2hi = (hi2[c] - 2.0 * hi[c] + at[c]) / (eps * eps);
      CHECK(std::fabs(d2hi - d2lo) < 1e-3);
    }
  }
}

TEST_CASE("scalar and vector rcs overloads agree") {
  const SplineSpec spec = unit_knots();
  double buf[3];
  for (double x = -1.0; x <= 4.0; x += 0.31) {
    rcs_basis(x, spec, buf);
    std::vector<double> v = rcs_basis(x, spec);
    for (int c = 0; c < 3; ++c) CHECK(buf[c] == v[c]);
  }
}

TEST_CASE("place_knots hits type-7 percentiles of 0..100") {
  std::vector<double> values;
  for (int i = 100; i >= 0; --i) values.push_back(i);  // unsorted on purpose
  const SplineSpec spec = place_knots(values);
  REQUIRE(spec.knots.size() == 4);
  CHECK(spec.knots[0] == doctest::Approx(5.0));
  CHECK(spec.knots[1] == doctest::Approx(35.0));
  CHECK(spec.knots[2] == doctest::Approx(65.0));
  CHECK(spec.knots[3] == doctest::Approx(95.0));
}

TEST_CASE("place_knots rejects degenerate samples") {
  CHECK_THROWS_AS(place_knots(std::vector<double>{}), ValidationError);
  const std::vector<double> constant(50, 2.0);
  CHECK_THROWS_AS(place_knots(constant), ValidationError);
  const std::vector<double> ok = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const double two[2] = {10.0, 90.0};
  CHECK_THROWS_AS(place_knots(ok, std::span<const double>(two, 2)),
                  ValidationError);
}

TEST_CASE("rcs_basis needs at least 3 knots") {
  SplineSpec spec;
  spec.knots = {0.0, 1.0};
  double buf[2];
  CHECK_THROWS_AS(rcs_basis(0.5, spec, buf), ValidationError);
}
