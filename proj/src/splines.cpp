#include "nte/splines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nte/common.hpp"
#include "nte/stats.hpp"

namespace nte {

std::string SplineSpec::describe() const {
  std::string s = "rcs(";
  char buf[32];
  for (std::size_t i = 0; i < knots.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.6g", i ? "," : "", knots[i]);
    s += buf;
  }
  return s + ")";
}

SplineSpec place_knots(std::span<const double> values,
                       std::span<const double> percentiles) {
  if (percentiles.size() < 3) {
    throw ValidationError("place_knots: need at least 3 knot percentiles");
  }
  if (values.empty()) {
    throw ValidationError("place_knots: empty sample");
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  SplineSpec spec;
  spec.knots.reserve(percentiles.size());
  for (double p : percentiles) {
    if (p < 0.0 || p > 100.0) {
      throw ValidationError("place_knots: percentile outside [0,100]");
    }
    spec.knots.push_back(quantile_type7(sorted, p / 100.0));
  }
  for (std::size_t i = 1; i < spec.knots.size(); ++i) {
    if (!(spec.knots[i] > spec.knots[i - 1])) {
      throw ValidationError(
          "place_knots: percentiles yield non-ascending knots (too few "
          "distinct values)");
    }
  }
  return spec;
}

namespace {
inline double cube_pos(double x) { return x > 0.0 ? x * x * x : 0.0; }
}  // namespace

void rcs_basis(double x, const SplineSpec& spec, double* out) {
  const auto& t = spec.knots;
  const int m = static_cast<int>(t.size());
  if (m < 3) throw ValidationError("rcs_basis: need at least 3 knots");
  out[0] = x;
  const double range = t[m - 1] - t[0];
  const double norm = range * range;
  const double denom = t[m - 1] - t[m - 2];
  for (int i = 0; i < m - 2; ++i) {
    const double term = cube_pos(x - t[i]) -
                        cube_pos(x - t[m - 2]) * (t[m - 1] - t[i]) / denom +
                        cube_pos(x - t[m - 1]) * (t[m - 2] - t[i]) / denom;
    out[i + 1] = term / norm;
  }
}

std::vector<double> rcs_basis(double x, const SplineSpec& spec) {
  std::vector<double> out(static_cast<std::size_t>(spec.basis_cols()));
  rcs_basis(x, spec, out.data());
  return out;
}

}  // namespace nte
