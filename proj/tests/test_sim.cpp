#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "nte/sim.hpp"

using namespace nte;

TEST_CASE("scenario parsing") {
  CHECK(parse_scenario(1) == Scenario::TsvOnly);
  CHECK(parse_scenario(2) == Scenario::Calendar);
  CHECK(parse_scenario(3) == Scenario::Both);
  CHECK_THROWS_AS(parse_scenario(0), ConfigError);
  CHECK_THROWS_AS(parse_scenario(4), ConfigError);
}

TEST_CASE("true hazards follow the scenario formulas") {
  // scenario 1: flat comparator, shift in time since vaccination
  CHECK(true_logit_hazard(Scenario::TsvOnly, 3, 5, 0) ==
        doctest::Approx(-4.0).epsilon(1e-15));
  CHECK(true_logit_hazard(Scenario::TsvOnly, 3, 5, 1) ==
        doctest::Approx(-4.0 - 2.5 + 0.02 * 5 + 0.005 * 25).epsilon(1e-14));

  // scenario 2: both arms move with calendar week l = j + k
  const int j = 4, k = 3, l = 7;
  CHECK(true_logit_hazard(Scenario::Calendar, j, k, 0) ==
        doctest::Approx(-4.0 - 0.01 * l - 0.003 * l * l).epsilon(1e-14));
  CHECK(true_logit_hazard(Scenario::Calendar, j, k, 1) ==
        doctest::Approx(-4.0 - 0.01 * l - 0.003 * l * l - 2.5 + 0.02 * l +
                        0.006 * l * l)
            .epsilon(1e-14));

  // scenario 3 adds the time-since-vaccination terms on top of scenario 2
  CHECK(true_logit_hazard(Scenario::Both, j, k, 1) ==
        doctest::Approx(true_logit_hazard(Scenario::Calendar, j, k, 1) +
                        0.02 * k + 0.005 * k * k)
            .epsilon(1e-14));
  CHECK(true_logit_hazard(Scenario::Both, j, k, 0) ==
        true_logit_hazard(Scenario::Calendar, j, k, 0));

  CHECK_THROWS_AS(true_logit_hazard(Scenario::TsvOnly, 0, 0, 1), DomainError);
  CHECK_THROWS_AS(true_logit_hazard(Scenario::TsvOnly, -1, 1, 1), DomainError);
}

TEST_CASE("true ve composes cumulative risks") {
  // independent computation straight from the hazard products
  for (Scenario s : {Scenario::TsvOnly, Scenario::Calendar, Scenario::Both}) {
    for (int j : {0, 5, 12}) {
      for (int k : {1, 5, 8}) {
        double s0 = 1.0, s1 = 1.0;
        for (int m = 1; m <= k; ++m) {
          s0 *= 1.0 - expit(true_logit_hazard(s, j, m, 0));
          s1 *= 1.0 - expit(true_logit_hazard(s, j, m, 1));
        }
        const double ve = 1.0 - (1.0 - s1) / (1.0 - s0);
        CHECK(true_ve(s, j, k) == doctest::Approx(ve).epsilon(1e-12));
      }
    }
  }
  // paper's headline cell: scenario-1 VE is 90.3% three weeks in and beyond
  CHECK(100.0 * true_ve(Scenario::TsvOnly, 0, 5) ==
        doctest::Approx(90.3).epsilon(0.001));
  CHECK(100.0 * true_ve(Scenario::Both, 12, 5) ==
        doctest::Approx(50.2).epsilon(0.01));
  CHECK(100.0 * true_ve(Scenario::Both, 5, 15) ==
        doctest::Approx(21.5).epsilon(0.01));
}

TEST_CASE("covariate generator moments") {
  Rng rng(123);
  const int n = 200000;
  double sum1 = 0.0, min1 = 1e9;
  double gap2 = 0.0, gap3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Covariates c = draw_covariates(rng);
    sum1 += c.x1;
    min1 = std::min(min1, c.x1);
    CHECK((c.x2 == 0.0 || c.x2 == 1.0));
    CHECK((c.x3 == 0.0 || c.x3 == 1.0));
    gap2 += c.x2 - expit(-0.42 - 0.047 * (c.x1 - 86.2));
    gap3 += c.x3 - expit(0.44 + 0.009 * (c.x1 - 86.2) + 0.37 * c.x2);
  }
  // folded normal: E[x1] = 80 + 7 sqrt(2/pi)
  const double mean1 = sum1 / n;
  CHECK(std::fabs(mean1 - (80.0 + 7.0 * std::sqrt(2.0 / M_PI))) < 0.05);
  CHECK(min1 >= 80.0);
  // Bernoulli draws center on their own linked probabilities
  CHECK(std::fabs(gap2 / n) < 0.005);
  CHECK(std::fabs(gap3 / n) < 0.005);
}

TEST_CASE("uptake and outcome regressions") {
  const Covariates base{86.2, 0.0, 0.0};
  CHECK(uptake_logit(base, 0) == doctest::Approx(-2.64).epsilon(1e-14));
  CHECK(uptake_logit(base, 4) ==
        doctest::Approx(-2.64 + 0.25 * 4 - 0.022 * 16).epsilon(1e-14));
  // quadratic in j peaks at week 6 over the grid
  int argmax = 0;
  for (int j = 1; j <= 20; ++j)
    if (uptake_logit(base, j) > uptake_logit(base, argmax)) argmax = j;
  CHECK(argmax == 6);

  const Covariates shifted{96.2, 1.0, 1.0};
  CHECK(uptake_logit(shifted, 0) ==
        doctest::Approx(-2.64 - 0.052 * 10.0 + 0.03 - 0.048).epsilon(1e-12));
  CHECK(outcome_shift(base) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(outcome_shift(shifted) ==
        doctest::Approx(-0.013 * 10.0 - 0.26 + 0.425).epsilon(1e-12));
}

TEST_CASE("balancing intercepts hit the marginal hazards") {
  const int tau = 10;
  const InterceptTable table =
      calibrate_intercepts(Scenario::Both, tau, 20000);
  REQUIRE(table.tau == tau);
  REQUIRE(table.iota0.size() == static_cast<std::size_t>(tau));

  // marginals over a fresh covariate sample reproduce the targets
  Rng rng(9);
  const int m = 400000;
  std::vector<double> shift(m);
  for (int i = 0; i < m; ++i) shift[i] = outcome_shift(draw_covariates(rng));
  auto marginal = [&](double iota) {
    double acc = 0.0;
    for (double c : shift) acc += expit(iota + c);
    return acc / m;
  };
  for (int l = 1; l <= tau; ++l) {
    const double target = expit(true_logit_hazard(Scenario::Both, 0, l, 0));
    CHECK(std::fabs(marginal(table.at0(l)) - target) < 5e-4);
  }
  for (auto [j, k] : {std::pair{0, 1}, {0, 5}, {3, 2}, {7, 3}}) {
    const double target = expit(true_logit_hazard(Scenario::Both, j, k, 1));
    CHECK(std::fabs(marginal(table.at1(j, k)) - target) < 5e-4);
  }

  // scenario-2 comparator hazard decreases with calendar week, so must iota0
  const InterceptTable cal = calibrate_intercepts(Scenario::Calendar, 6, 5000);
  for (int l = 1; l < 6; ++l) CHECK(cal.at0(l + 1) < cal.at0(l));

  // identical inputs calibrate to identical tables (fixed internal seed)
  const InterceptTable again = calibrate_intercepts(Scenario::Calendar, 6, 5000);
  CHECK(again.iota0 == cal.iota0);
  CHECK(again.iota1 == cal.iota1);

  CHECK_THROWS_AS(calibrate_intercepts(Scenario::Both, 0, 5000),
                  ValidationError);
  CHECK_THROWS_AS(calibrate_intercepts(Scenario::Both, 10, 10),
                  ValidationError);
}

TEST_CASE("simulated cohorts are valid and reproducible") {
  SimConfig config;
  config.scenario = Scenario::TsvOnly;
  config.n = 2000;
  config.tau = 10;
  config.num_trials = 5;
  config.seed = 42;
  const InterceptTable table =
      calibrate_intercepts(config.scenario, config.tau, 20000);

  const Cohort c1 = simulate_cohort(config, table);
  REQUIRE(c1.persons.size() == 2000);
  REQUIRE(c1.covariate_names.size() == 3);

  int events = 0, vaccinated = 0;
  for (const auto& rec : c1.persons) {
    CHECK(rec.s == 0);
    CHECK((rec.delta == 0 || rec.delta == 1));
    CHECK(rec.t_star >= 1);
    CHECK(rec.t_star <= 11);
    // no loss to follow-up: delta = 0 only at the administrative end
    if (rec.delta == 0) CHECK(rec.t_star == 11);
    if (is_never(rec.v1)) {
      CHECK(is_never(rec.v2));
    } else {
      CHECK(rec.v1 >= 1);
      CHECK(rec.v2 == rec.v1 + 1);
      ++vaccinated;
    }
    CHECK(is_never(rec.v3));
    const int cap = std::min(4, rec.t_star - 1);
    const int expect_sstar = is_never(rec.v1) ? cap : std::min(cap, rec.v1 - 1);
    CHECK(rec.s_star == expect_sstar);
    events += rec.delta;
  }
  CHECK(events > 100);
  CHECK(vaccinated > 400);

  // same seed, same bytes; different seed, different draw
  std::ostringstream a, b;
  write_cohort(a, c1);
  write_cohort(b, simulate_cohort(config, table));
  CHECK(a.str() == b.str());
  SimConfig other = config;
  other.seed = 43;
  std::ostringstream c;
  write_cohort(c, simulate_cohort(other, table));
  CHECK(a.str() != c.str());

  // the writer round-trips through the loader
  std::istringstream in(a.str());
  const Cohort back = load_cohort(in, config.protocol());
  REQUIRE(back.persons.size() == c1.persons.size());
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& p = c1.persons[i];
    const auto& q = back.persons[i];
    CHECK(p.id == q.id);
    CHECK(p.t_star == q.t_star);
    CHECK(p.delta == q.delta);
    CHECK(p.v1 == q.v1);
    CHECK(p.v2 == q.v2);
    CHECK(p.x == q.x);
  }

  InterceptTable wrong = table;
  wrong.tau = 8;
  CHECK_THROWS_AS(simulate_cohort(config, wrong), ValidationError);
  SimConfig empty = config;
  empty.n = 0;
  CHECK_THROWS_AS(simulate_cohort(empty, table), ValidationError);
}

TEST_CASE("tiny instances: exact ipw matches the g-formula") {
  Rng rng(77);
  for (int rep = 0; rep < 5; ++rep) {
    const TinyInstance t = random_tiny_instance(rng);
    for (int j = 0; j < t.num_trials; ++j) {
      for (int k = 1; k <= t.tau - j; ++k) {
        const double g = tiny_ve_gformula(t, j, k);
        CHECK(std::fabs(g - tiny_ve_ipw(t, j, k)) <= 1e-10);
        CHECK(std::fabs(g - tiny_ve_paths(t, j, k)) <= 1e-10);
        CHECK(g < 1.0);
      }
    }
  }

  const TinyInstance t = random_tiny_instance(rng);
  CHECK_THROWS_AS(tiny_ve_gformula(t, 3, 1), DomainError);
  CHECK_THROWS_AS(tiny_ve_gformula(t, 0, 5), DomainError);
  CHECK_THROWS_AS(tiny_ve_gformula(t, 0, 0), DomainError);
}

TEST_CASE("replication harness summarizes a short run") {
  ReplicationConfig rc;
  rc.sim.scenario = Scenario::TsvOnly;
  rc.sim.n = 4000;
  rc.sim.tau = 8;
  rc.sim.num_trials = 3;
  rc.sim.seed = 11;
  rc.replications = 3;
  rc.cells = {{0, 2}, {1, 3}};
  rc.run_teh = true;

  const ReplicationSummary sum = run_replications(rc);
  CHECK(sum.failures == 0);
  CHECK(sum.replications_used == 3);
  CHECK(sum.teh_ran);
  REQUIRE(sum.cells.size() == 2);
  for (const auto& cs : sum.cells) {
    CHECK(cs.true_ve_pct ==
          doctest::Approx(100.0 * true_ve(rc.sim.scenario, cs.cell.j,
                                          cs.cell.k))
              .epsilon(1e-12));
    CHECK(cs.bias_pp ==
          doctest::Approx(cs.mean_ve_pct - cs.true_ve_pct).epsilon(1e-10));
    CHECK(cs.ese >= 0.0);
    CHECK(cs.ase > 0.0);
    CHECK(cs.coverage >= 0.0);
    CHECK(cs.coverage <= 1.0);
  }

  // the text summary is deterministic end to end
  std::ostringstream s1, s2;
  write_replication_summary(s1, sum);
  write_replication_summary(s2, run_replications(rc));
  CHECK(s1.str() == s2.str());
  CHECK(s1.str().find("scenario 1\n") != std::string::npos);
  CHECK(s1.str().find("model eq3\n") != std::string::npos);
  CHECK(s1.str().find("basis poly\n") != std::string::npos);
  CHECK(s1.str().find("replications 3\n") != std::string::npos);
  CHECK(s1.str().find("\nj0_k2 ") != std::string::npos);
  CHECK(s1.str().find("\nj1_k3 ") != std::string::npos);
  CHECK(s1.str().find("\nteh_rejection ") != std::string::npos);

  // eq5 without the TEH pass flags the skip in the summary
  ReplicationConfig quiet = rc;
  quiet.replications = 2;
  quiet.family = MsmSpec::Family::TsvOnly;
  quiet.run_teh = false;
  std::ostringstream s3;
  write_replication_summary(s3, run_replications(quiet));
  CHECK(s3.str().find("model eq5\n") != std::string::npos);
  CHECK(s3.str().find("teh_rejection not_run\n") != std::string::npos);

  CHECK_THROWS_AS(
      [&] {
        ReplicationConfig bad = rc;
        bad.replications = 1;
        run_replications(bad);
      }(),
      ValidationError);
}
