// Acceptance criteria 4, 5, 6: the desk-scale Monte Carlo study. 500
// replications per configuration at n = 20,000, tau = 20, 13 trials; one
// PASS/FAIL line per criterion. Expect a couple of hours on one core.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdarg>
#include <cstdio>

#include "doctest.h"
#include "nte/sim.hpp"

using namespace nte;

namespace {

void report(int criterion, bool ok, const char* fmt, ...) {
  char detail[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(detail, sizeof(detail), fmt, args);
  va_end(args);
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion,
              detail);
  std::fflush(stdout);
}

ReplicationSummary run(Scenario scenario, MsmSpec::Family family,
                       TimeBasis basis, bool teh, std::uint64_t seed) {
  ReplicationConfig rc;
  rc.sim.scenario = scenario;
  rc.sim.n = 20000;
  rc.sim.tau = 20;
  rc.sim.num_trials = 13;
  rc.sim.seed = seed;
  rc.replications = 500;
  rc.family = family;
  rc.basis = basis;
  rc.run_teh = teh;
  rc.progress = true;
  std::fprintf(stderr, "running scenario %d %s %s...\n",
               static_cast<int>(scenario),
               family == MsmSpec::Family::TsvOnly ? "eq5" : "eq3",
               basis == TimeBasis::Spline ? "spline" : "poly");
  return run_replications(rc);
}

// Criteria 4a/5 share the three correctly specified eq-3 runs.
const ReplicationSummary& eq3(int scenario) {
  static const ReplicationSummary s1 =
      run(Scenario::TsvOnly, MsmSpec::Family::CalAndTsv, TimeBasis::Poly,
          true, 101);
  static const ReplicationSummary s2 =
      run(Scenario::Calendar, MsmSpec::Family::CalAndTsv, TimeBasis::Poly,
          true, 102);
  static const ReplicationSummary s3 =
      run(Scenario::Both, MsmSpec::Family::CalAndTsv, TimeBasis::Poly, true,
          103);
  return scenario == 1 ? s1 : scenario == 2 ? s2 : s3;
}

struct CellGates {
  double max_bias = 0.0;
  double cov_lo = 1.0, cov_hi = 0.0;
  double ratio_lo = 1e9, ratio_hi = 0.0;

  void absorb(const ReplicationSummary& sum) {
    for (const auto& cs : sum.cells) {
      max_bias = std::max(max_bias, std::fabs(cs.bias_pp));
      cov_lo = std::min(cov_lo, cs.coverage);
      cov_hi = std::max(cov_hi, cs.coverage);
      const double ratio = cs.ase / cs.ese;
      ratio_lo = std::min(ratio_lo, ratio);
      ratio_hi = std::max(ratio_hi, ratio);
    }
  }
};

double bias_at(const ReplicationSummary& sum, int j, int k) {
  for (const auto& cs : sum.cells)
    if (cs.cell.j == j && cs.cell.k == k) return cs.bias_pp;
  throw ValidationError("cell missing from summary");
}

}  // namespace

TEST_CASE("criterion 4: desk-scale monte carlo") {
  CellGates gates;
  int failures = 0;
  for (int s = 1; s <= 3; ++s) {
    gates.absorb(eq3(s));
    failures += eq3(s).failures;
  }
  const bool eq3_ok = gates.max_bias <= 1.5 && gates.cov_lo >= 0.92 &&
                      gates.cov_hi <= 0.98 && gates.ratio_lo >= 0.9 &&
                      gates.ratio_hi <= 1.1;

  // misspecified eq-5 under scenario 2: increasing bias across trials,
  // negative early, strongly positive late
  const ReplicationSummary eq5 =
      run(Scenario::Calendar, MsmSpec::Family::TsvOnly, TimeBasis::Poly,
          false, 104);
  const double b0 = bias_at(eq5, 0, 5);
  const double b3 = bias_at(eq5, 3, 5);
  const double b6 = bias_at(eq5, 6, 5);
  const double b9 = bias_at(eq5, 9, 5);
  const double b12 = bias_at(eq5, 12, 5);
  const bool eq5_ok = b0 < b3 && b3 < b6 && b6 < b9 && b9 < b12 &&
                      b0 < 0.0 && b3 < 0.0 && b9 > 0.0 && b12 > 0.0 &&
                      std::fabs(b12 - 28.5) <= 6.0;

  const bool ok = eq3_ok && eq5_ok && failures + eq5.failures == 0;
  report(4, ok,
         "eq3 max|bias| %.2fpp, coverage [%.1f, %.1f]%%, ASE/ESE "
         "[%.3f, %.3f]; eq5-scn2 bias path %.1f < %.1f < %.1f < %.1f < "
         "%.1fpp (VE12(5) target 28.5); %d failed replications",
         gates.max_bias, 100.0 * gates.cov_lo, 100.0 * gates.cov_hi,
         gates.ratio_lo, gates.ratio_hi, b0, b3, b6, b9, b12,
         failures + eq5.failures);
  CHECK(ok);
}

TEST_CASE("criterion 5: teh calibration and power") {
  const double r1 = 100.0 * eq3(1).teh_rejection;
  const double r2 = 100.0 * eq3(2).teh_rejection;
  const double r3 = 100.0 * eq3(3).teh_rejection;
  const bool ok = eq3(1).teh_ran && eq3(2).teh_ran && eq3(3).teh_ran &&
                  r1 >= 2.5 && r1 <= 7.5 && r2 >= 95.0 && r3 >= 95.0;
  report(5, ok,
         "one-sided rejection rates: scenario 1 %.1f%% (want [2.5, 7.5]), "
         "scenario 2 %.1f%%, scenario 3 %.1f%% (want >= 95)",
         r1, r2, r3);
  CHECK(ok);
}

TEST_CASE("criterion 6: spline variant") {
  CellGates gates;
  int failures = 0;
  for (int s = 1; s <= 3; ++s) {
    const ReplicationSummary sum =
        run(parse_scenario(s), MsmSpec::Family::CalAndTsv, TimeBasis::Spline,
            false, static_cast<std::uint64_t>(104 + s));
    gates.absorb(sum);
    failures += sum.failures;
  }
  const bool ok = gates.max_bias <= 2.0 && gates.cov_lo >= 0.90 &&
                  gates.cov_hi <= 0.98 && failures == 0;
  report(6, ok,
         "spline max|bias| %.2fpp, coverage [%.1f, %.1f]%%; %d failed "
         "replications",
         gates.max_bias, 100.0 * gates.cov_lo, 100.0 * gates.cov_hi,
         failures);
  CHECK(ok);
}
