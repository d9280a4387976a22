#pragma once

#include <span>
#include <string>
#include <vector>

namespace nte {

// Restricted cubic spline (natural cubic spline, Harrell parameterization):
// m knots give m-1 basis columns (one linear term plus m-2 truncated-cubic
// combinations), linear beyond the boundary knots, nonlinear terms scaled by
// (t_m - t_1)^2.
struct SplineSpec {
  std::vector<double> knots;  // strictly ascending, size >= 3

  int basis_cols() const { return static_cast<int>(knots.size()) - 1; }
  std::string describe() const;
};

inline constexpr double kDefaultKnotPercentiles[4] = {5.0, 35.0, 65.0, 95.0};

// Knots at the given percentiles (0-100) of `values`. Throws ValidationError
// if the resulting knots are not strictly ascending or fewer than 3.
SplineSpec place_knots(std::span<const double> values,
                       std::span<const double> percentiles =
                           std::span<const double>(kDefaultKnotPercentiles, 4));

// Evaluates the basis at x into out[0 .. basis_cols()-1]; out[0] = x.
void rcs_basis(double x, const SplineSpec& spec, double* out);

std::vector<double> rcs_basis(double x, const SplineSpec& spec);

}  // namespace nte
