#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "nte/mestimation.hpp"
#include "nte/stats.hpp"

namespace nte {

// The three simulation scenarios: (1) VE varies with time since vaccination
// only, (2) hazards vary with calendar time and the vaccinated hazard shift
// depends on calendar time only, (3) both time scales matter.
enum class Scenario { TsvOnly = 1, Calendar = 2, Both = 3 };

Scenario parse_scenario(int value);

// Marginal-model logit hazard lambda_j^z(k) under a scenario.
double true_logit_hazard(Scenario s, int j, int k, int z);

// True VE_j(k) as a fraction, from the scenario hazards via the cumulative
// risk-ratio formula.
double true_ve(Scenario s, int j, int k);

struct SimConfig {
  Scenario scenario = Scenario::TsvOnly;
  int n = 20000;
  int tau = 20;
  int num_trials = 13;
  std::uint64_t seed = 1;

  ProtocolConfig protocol() const {
    return ProtocolConfig{num_trials, tau, 6, "first enrollment week"};
  }
};

struct Covariates {
  double x1 = 0.0, x2 = 0.0, x3 = 0.0;
};

Covariates draw_covariates(Rng& rng);

// Linear covariate shift of the logit outcome hazard.
double outcome_shift(const Covariates& c);

double uptake_logit(const Covariates& c, int j);

// Balancing intercepts: iota0 indexed by calendar week l (the unvaccinated
// hazard depends on l only), iota1 by (uptake trial j, weeks since uptake k).
struct InterceptTable {
  int tau = 0;
  std::vector<double> iota0;  // l = 1..tau at [l-1]
  std::vector<double> iota1;  // (j, k) at [j*tau + k-1], k <= tau-j

  double at0(int l) const { return iota0[static_cast<std::size_t>(l) - 1]; }
  double at1(int j, int k) const {
    return iota1[static_cast<std::size_t>(j) * tau + k - 1];
  }
};

// Solves mean_X expit(iota + shift(X)) = target hazard for every table cell
// by bisection over a fresh covariate sample (fixed internal seed, so the
// data-generating process does not drift with the cohort seed).
InterceptTable calibrate_intercepts(Scenario s, int tau,
                                    int sample_size = 100000);

// One observational cohort: covariates, absorbing uptake draws over j = 0..tau
// (v1 = first success + 1), weekly outcome walk switching from the
// unvaccinated hazard stream to the uptake-trial stream at v1, administrative
// end at tau (t_star = tau+1, delta = 0 when event-free). Uptake and outcome
// draws are independent given X. Emits v2 = v1 + 1, v3 = never, s = 0,
// s_star = min(v1-1, J, t_star-1).
Cohort simulate_cohort(const SimConfig& config, const InterceptTable& table);

void write_cohort(std::ostream& out, const Cohort& cohort);

// ---- exact tiny-instance oracle ----------------------------------------

// Fully enumerable data-generating process with one binary covariate, used
// to check the g-formula identity against the exact-weight IPW functional.
struct TinyInstance {
  int tau = 4;
  int num_trials = 3;
  double px1 = 0.5;  // P(X = 1)
  // Index [x][j], j = 0..tau: per-week uptake probability.
  std::array<std::vector<double>, 2> uptake;
  // Index [x][l-1], l = 1..tau: unvaccinated weekly hazard.
  std::array<std::vector<double>, 2> lam0;
  // Index [x][j*tau + k-1]: vaccinated weekly hazard k weeks after uptake
  // at trial j (j = 0..tau-1, 1 <= k <= tau-j).
  std::array<std::vector<double>, 2> lam1;

  ProtocolConfig protocol() const {
    return ProtocolConfig{num_trials, tau, 6, ""};
  }
};

TinyInstance random_tiny_instance(Rng& rng);

// Counterfactual risk ratio via the g-formula (A.12): eligibility-weighted
// covariate mixture of per-week survival products.
double tiny_ve_gformula(const TinyInstance& t, int j, int k);

// The same estimand through the IPW functional: population expectations of
// true-weighted event and at-risk row indicators, hazard ratio per week,
// then the cumulative risk-ratio formula.
double tiny_ve_ipw(const TinyInstance& t, int j, int k);

// Brute force: enumerates every observed-data path (x, uptake week, event
// week), builds the participant record, and evaluates trial rows through the
// cohort indicator functions with exact path probabilities.
double tiny_ve_paths(const TinyInstance& t, int j, int k);

// ---- replication harness -------------------------------------------------

enum class TimeBasis { Poly, Spline };

struct ReplicationConfig {
  SimConfig sim;  // sim.seed is the base seed; replication r uses seed ^ r
  int replications = 500;
  MsmSpec::Family family = MsmSpec::Family::CalAndTsv;
  TimeBasis basis = TimeBasis::Poly;
  std::optional<double> truncate_percentile;
  std::vector<GridCell> cells;  // empty -> the ten Table-1 cells
  bool run_teh = true;          // forced off for TrialSpecific
  double gamma = 0.05;
  bool progress = false;  // one stderr line every 50 replications
};

std::vector<GridCell> default_report_cells();

struct CellSummary {
  GridCell cell;
  double true_ve_pct = 0.0;
  double mean_ve_pct = 0.0;
  double bias_pp = 0.0;
  double ese = 0.0;       // SD of VE estimates, percent scale
  double ase = 0.0;       // mean delta-method SE, percent scale
  double coverage = 0.0;  // fraction of CIs covering the truth
};

struct ReplicationSummary {
  ReplicationConfig config;
  std::vector<CellSummary> cells;
  double teh_rejection = 0.0;  // fraction of one-sided p < 0.05
  bool teh_ran = false;
  int replications_used = 0;
  int failures = 0;
};

ReplicationSummary run_replications(const ReplicationConfig& config);

void write_replication_summary(std::ostream& out,
                               const ReplicationSummary& summary);

}  // namespace nte
