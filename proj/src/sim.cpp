#include "nte/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <ostream>

namespace nte {

namespace {

constexpr double kX1Mean = 86.2;  // centering constant from the generator

double scenario_control_logit(Scenario s, int l) {
  switch (s) {
    case Scenario::TsvOnly:
      return -4.0;
    case Scenario::Calendar:
    case Scenario::Both:
      return -4.0 - 0.01 * l - 0.003 * l * l;
  }
  throw DomainError("unknown scenario");
}

double scenario_active_shift(Scenario s, int j, int k) {
  const int l = j + k;
  switch (s) {
    case Scenario::TsvOnly:
      return -2.5 + 0.02 * k + 0.005 * k * k;
    case Scenario::Calendar:
      return -2.5 + 0.02 * l + 0.006 * l * l;
    case Scenario::Both:
      return -2.5 + 0.02 * l + 0.006 * l * l + 0.02 * k + 0.005 * k * k;
  }
  throw DomainError("unknown scenario");
}

}  // namespace

Scenario parse_scenario(int value) {
  if (value < 1 || value > 3)
    throw ConfigError("scenario must be 1, 2, or 3");
  return static_cast<Scenario>(value);
}

double true_logit_hazard(Scenario s, int j, int k, int z) {
  if (k < 1 || j < 0) throw DomainError("true hazard needs j >= 0, k >= 1");
  double eta = scenario_control_logit(s, j + k);
  if (z) eta += scenario_active_shift(s, j, k);
  return eta;
}

double true_ve(Scenario s, int j, int k) {
  double log_surv0 = 0.0, log_surv1 = 0.0;
  for (int m = 1; m <= k; ++m) {
    log_surv0 += std::log1p(-expit(true_logit_hazard(s, j, m, 0)));
    log_surv1 += std::log1p(-expit(true_logit_hazard(s, j, m, 1)));
  }
  return 1.0 - (-std::expm1(log_surv1)) / (-std::expm1(log_surv0));
}

Covariates draw_covariates(Rng& rng) {
  Covariates c;
  c.x1 = std::fabs(rng.normal()) * 7.0 + 80.0;
  c.x2 = rng.bernoulli(expit(-0.42 - 0.047 * (c.x1 - kX1Mean))) ? 1.0 : 0.0;
  c.x3 = rng.bernoulli(expit(0.44 + 0.009 * (c.x1 - kX1Mean) + 0.37 * c.x2))
             ? 1.0
             : 0.0;
  return c;
}

double outcome_shift(const Covariates& c) {
  return -0.013 * (c.x1 - kX1Mean) - 0.26 * c.x2 + 0.425 * c.x3;
}

double uptake_logit(const Covariates& c, int j) {
  return -2.64 + 0.25 * j - 0.022 * j * j - 0.052 * (c.x1 - kX1Mean) +
         0.03 * c.x2 - 0.048 * c.x3;
}

InterceptTable calibrate_intercepts(Scenario s, int tau, int sample_size) {
  if (tau < 1) throw ValidationError("calibration needs tau >= 1");
  if (sample_size < 1000)
    throw ValidationError("calibration sample too small to be meaningful");

  // Fixed internal seed: the balancing intercepts are part of the
  // data-generating process, not of any particular cohort draw.
  Rng rng(0x6b7a1ca1ULL + static_cast<std::uint64_t>(s));
  std::vector<double> u(static_cast<std::size_t>(sample_size));
  for (double& ui : u) ui = std::exp(-outcome_shift(draw_covariates(rng)));

  // mean expit(iota + c_i) = mean 1 / (1 + e^-iota u_i), increasing in iota.
  auto marginal = [&](double iota) {
    const double t = std::exp(-iota);
    long double acc = 0.0L;
    for (double ui : u) acc += 1.0 / (1.0 + t * ui);
    return static_cast<double>(acc / static_cast<long double>(u.size()));
  };

  std::map<double, double> memo;
  auto solve = [&](double target) {
    if (auto it = memo.find(target); it != memo.end()) return it->second;
    double lo = logit(target) - 2.0, hi = logit(target) + 2.0;
    for (int i = 0; i < 10 && marginal(lo) > target; ++i) lo -= 2.0;
    for (int i = 0; i < 10 && marginal(hi) < target; ++i) hi += 2.0;
    double iota = 0.0;
    bool ok = false;
    for (int it = 0; it < 200; ++it) {
      iota = (lo + hi) / 2.0;
      const double gap = marginal(iota) - target;
      if (std::fabs(gap) < 1e-10) {
        ok = true;
        break;
      }
      (gap < 0.0 ? lo : hi) = iota;
    }
    if (!ok)
      throw DomainError("balancing-intercept bisection failed to converge");
    memo.emplace(target, iota);
    return iota;
  };

  InterceptTable table;
  table.tau = tau;
  table.iota0.resize(static_cast<std::size_t>(tau));
  for (int l = 1; l <= tau; ++l)
    table.iota0[l - 1] = solve(expit(scenario_control_logit(s, l)));
  table.iota1.assign(static_cast<std::size_t>(tau) * tau, 0.0);
  for (int j = 0; j <= tau - 1; ++j)
    for (int k = 1; k <= tau - j; ++k)
      table.iota1[static_cast<std::size_t>(j) * tau + k - 1] =
          solve(expit(scenario_control_logit(s, j + k) +
                      scenario_active_shift(s, j, k)));
  return table;
}

Cohort simulate_cohort(const SimConfig& config, const InterceptTable& table) {
  const ProtocolConfig protocol = config.protocol();
  protocol.validate();
  if (config.n < 1) throw ValidationError("cohort size must be positive");
  if (table.tau != config.tau)
    throw ValidationError("intercept table was calibrated for a different tau");

  Cohort cohort;
  cohort.covariate_names = {"x1", "x2", "x3"};
  cohort.persons.reserve(static_cast<std::size_t>(config.n));
  Rng rng(config.seed);
  const int J = protocol.J();

  for (int i = 0; i < config.n; ++i) {
    const Covariates cov = draw_covariates(rng);
    const double shift = outcome_shift(cov);

    int v1 = kNever;
    for (int j = 0; j <= config.tau; ++j) {
      if (rng.bernoulli(expit(uptake_logit(cov, j)))) {
        v1 = j + 1;
        break;
      }
    }

    int t_star = config.tau + 1, delta = 0;
    for (int l = 1; l <= config.tau; ++l) {
      const double iota = (is_never(v1) || l < v1)
                              ? table.at0(l)
                              : table.at1(v1 - 1, l - v1 + 1);
      if (rng.bernoulli(expit(iota + shift))) {
        t_star = l;
        delta = 1;
        break;
      }
    }

    ParticipantRecord rec;
    rec.id = std::to_string(i + 1);
    rec.t_star = t_star;
    rec.delta = delta;
    rec.s = 0;
    rec.s_star = std::min(J, t_star - 1);
    if (!is_never(v1)) rec.s_star = std::min(rec.s_star, v1 - 1);
    rec.v1 = v1;
    rec.v2 = is_never(v1) ? kNever : v1 + 1;
    rec.v3 = kNever;
    rec.x = {cov.x1, cov.x2, cov.x3};
    cohort.persons.push_back(std::move(rec));
  }
  return cohort;
}

void write_cohort(std::ostream& out, const Cohort& cohort) {
  out << "id,t_star,delta,s,s_star,v1,v2,v3";
  for (const auto& name : cohort.covariate_names) out << ',' << name;
  out << '\n';
  char buf[64];
  auto put_week = [&](int w) {
    if (is_never(w)) {
      out << ",inf";
    } else {
      out << ',' << w;
    }
  };
  for (const auto& rec : cohort.persons) {
    out << rec.id << ',' << rec.t_star << ',' << rec.delta << ',' << rec.s
        << ',' << rec.s_star;
    put_week(rec.v1);
    put_week(rec.v2);
    put_week(rec.v3);
    for (double x : rec.x) {
      std::snprintf(buf, sizeof(buf), "%.17g", x);
      out << ',' << buf;
    }
    out << '\n';
  }
}

// ---- exact tiny-instance oracle ----------------------------------------

TinyInstance random_tiny_instance(Rng& rng) {
  TinyInstance t;
  t.px1 = 0.3 + 0.4 * rng.uniform();
  for (int x = 0; x < 2; ++x) {
    t.uptake[x].resize(static_cast<std::size_t>(t.tau) + 1);
    for (double& p : t.uptake[x]) p = 0.05 + 0.40 * rng.uniform();
    t.lam0[x].resize(static_cast<std::size_t>(t.tau));
    for (double& p : t.lam0[x]) p = 0.02 + 0.18 * rng.uniform();
    t.lam1[x].assign(static_cast<std::size_t>(t.tau) * t.tau, 0.0);
    for (int j = 0; j <= t.tau - 1; ++j)
      for (int k = 1; k <= t.tau - j; ++k)
        t.lam1[x][static_cast<std::size_t>(j) * t.tau + k - 1] =
            0.01 + 0.14 * rng.uniform();
  }
  return t;
}

namespace {

double tiny_lam1(const TinyInstance& t, int x, int j, int k) {
  return t.lam1[x][static_cast<std::size_t>(j) * t.tau + k - 1];
}

// P(eligible for trial j | X = x): unvaccinated through draw j-1 and
// event-free through week j.
double tiny_elig(const TinyInstance& t, int x, int j) {
  double p = 1.0;
  for (int d = 0; d < j; ++d) p *= 1.0 - t.uptake[x][d];
  for (int l = 1; l <= j; ++l) p *= 1.0 - t.lam0[x][l - 1];
  return p;
}

void tiny_check(const TinyInstance& t, int j, int k) {
  if (j < 0 || j >= t.num_trials || k < 1 || k > t.tau - j)
    throw DomainError("tiny instance: (j, k) outside the grid");
}

}  // namespace

double tiny_ve_gformula(const TinyInstance& t, int j, int k) {
  tiny_check(t, j, k);
  double den = 0.0, risk0 = 0.0, risk1 = 0.0;
  for (int x = 0; x < 2; ++x) {
    const double w = (x ? t.px1 : 1.0 - t.px1) * tiny_elig(t, x, j);
    double s0 = 1.0, s1 = 1.0;
    for (int m = 1; m <= k; ++m) {
      s0 *= 1.0 - t.lam0[x][j + m - 1];
      s1 *= 1.0 - tiny_lam1(t, x, j, m);
    }
    den += w;
    risk0 += w * (1.0 - s0);
    risk1 += w * (1.0 - s1);
  }
  return 1.0 - (risk1 / den) / (risk0 / den);
}

double tiny_ve_ipw(const TinyInstance& t, int j, int k) {
  tiny_check(t, j, k);
  // E[W Y row] and E[W row] over the observed-data law, with true weights;
  // rows are the r = 1 person-weeks of trial j.
  double surv0 = 1.0, surv1 = 1.0;
  for (int m = 1; m <= k; ++m) {
    double num[2] = {0.0, 0.0}, den[2] = {0.0, 0.0};
    for (int x = 0; x < 2; ++x) {
      const double px = (x ? t.px1 : 1.0 - t.px1) * tiny_elig(t, x, j);
      const double e = t.uptake[x][j];
      {  // z = 1 arm: no artificial censoring, d = 1
        const double w = 1.0 / e;
        double atrisk = 1.0;
        for (int i = 1; i < m; ++i) atrisk *= 1.0 - tiny_lam1(t, x, j, i);
        const double lam = tiny_lam1(t, x, j, m);
        num[1] += px * e * atrisk * lam * w;
        den[1] += px * e * atrisk * w;
      }
      {  // z = 0 arm: uncensored means no uptake success at draws j+1..j+m
        double w = 1.0 / (1.0 - e);
        double atrisk = 1.0;
        for (int i = 1; i < m; ++i) {
          atrisk *= (1.0 - t.lam0[x][j + i - 1]) * (1.0 - t.uptake[x][j + i]);
          w /= 1.0 - t.uptake[x][j + i];
        }
        w /= 1.0 - t.uptake[x][j + m];
        const double lam = t.lam0[x][j + m - 1];
        const double keep = 1.0 - t.uptake[x][j + m];
        num[0] += px * (1.0 - e) * atrisk * lam * keep * w;
        den[0] += px * (1.0 - e) * atrisk * keep * w;
      }
    }
    surv0 *= 1.0 - num[0] / den[0];
    surv1 *= 1.0 - num[1] / den[1];
  }
  return 1.0 - (1.0 - surv1) / (1.0 - surv0);
}

double tiny_ve_paths(const TinyInstance& t, int j, int k) {
  tiny_check(t, j, k);
  const ProtocolConfig protocol = t.protocol();
  const int J = protocol.J();
  // num/den[z][m-1] accumulate E[W y row] and E[W row] per week.
  std::vector<double> num[2], den[2];
  for (int z = 0; z < 2; ++z) {
    num[z].assign(static_cast<std::size_t>(k), 0.0);
    den[z].assign(static_cast<std::size_t>(k), 0.0);
  }

  for (int x = 0; x < 2; ++x) {
    const double px = x ? t.px1 : 1.0 - t.px1;
    // jstar = t.tau + 1 encodes "no uptake success at any draw".
    for (int jstar = 0; jstar <= t.tau + 1; ++jstar) {
      const bool took = jstar <= t.tau;
      double p_up = 1.0;
      for (int d = 0; d < std::min(jstar, t.tau + 1); ++d)
        p_up *= 1.0 - t.uptake[x][d];
      if (took) p_up *= t.uptake[x][jstar];
      const int v1 = took ? jstar + 1 : kNever;

      auto week_hazard = [&](int l) {
        return (is_never(v1) || l < v1) ? t.lam0[x][l - 1]
                                        : tiny_lam1(t, x, v1 - 1, l - v1 + 1);
      };
      // tstar = t.tau + 1 encodes "event-free through tau".
      for (int tstar = 1; tstar <= t.tau + 1; ++tstar) {
        const int delta = tstar <= t.tau ? 1 : 0;
        double p_ev = 1.0;
        for (int l = 1; l < std::min(tstar, t.tau + 1); ++l)
          p_ev *= 1.0 - week_hazard(l);
        if (delta) p_ev *= week_hazard(tstar);
        const double prob = px * p_up * p_ev;

        ParticipantRecord rec;
        rec.t_star = delta ? tstar : t.tau + 1;
        rec.delta = delta;
        rec.s = 0;
        rec.s_star = std::min(J, rec.t_star - 1);
        if (!is_never(v1)) rec.s_star = std::min(rec.s_star, v1 - 1);
        rec.v1 = v1;
        rec.v2 = is_never(v1) ? kNever : v1 + 1;
        rec.v3 = kNever;
        if (j < rec.s || j > rec.s_star) continue;

        const int z = uptake_indicator(rec, j);
        const double e = t.uptake[x][j];
        const double arm = z ? 1.0 / e : 1.0 / (1.0 - e);
        double w = arm;
        for (int m = 1; m <= k; ++m) {
          const int prev_r = m == 1 ? 1 : censor_indicator(rec, j, m - 1,
                                                           protocol);
          const int prev_y = event_indicator(rec, j, m - 1, protocol);
          if (prev_r != 1 || prev_y != 0) break;
          // True retention hazard d_jm: only the comparator arm can censor.
          if (z == 0) w /= 1.0 - t.uptake[x][j + m];
          if (censor_indicator(rec, j, m, protocol) == 1) {
            den[z][m - 1] += prob * w;
            if (event_indicator(rec, j, m, protocol) == 1)
              num[z][m - 1] += prob * w;
          }
        }
      }
    }
  }

  double surv0 = 1.0, surv1 = 1.0;
  for (int m = 0; m < k; ++m) {
    surv0 *= 1.0 - num[0][m] / den[0][m];
    surv1 *= 1.0 - num[1][m] / den[1][m];
  }
  return 1.0 - (1.0 - surv1) / (1.0 - surv0);
}

// ---- replication harness -------------------------------------------------

std::vector<GridCell> default_report_cells() {
  return {{0, 5}, {3, 5}, {6, 5}, {9, 5}, {12, 5},
          {5, 1}, {5, 4}, {5, 8}, {5, 12}, {5, 15}};
}

ReplicationSummary run_replications(const ReplicationConfig& config_in) {
  ReplicationConfig config = config_in;
  if (config.replications < 2)
    throw ValidationError("need at least 2 replications");
  if (config.cells.empty()) config.cells = default_report_cells();
  if (config.family == MsmSpec::Family::TrialSpecific) config.run_teh = false;
  const ProtocolConfig protocol = config.sim.protocol();
  protocol.validate();

  const InterceptTable table =
      calibrate_intercepts(config.sim.scenario, config.sim.tau);

  PropensitySpec g;
  g.cov_idx = {0, 1, 2};
  CensoringSpec h;
  h.arm = CensoringSpec::Arm::Z0Only;
  h.cov_idx = {0, 1, 2};
  MsmSpec f;
  f.family = config.family;
  f.num_trials = protocol.num_trials;
  if (config.basis == TimeBasis::Spline) {
    g.trial_term = TermBuilder::parse("rcs:4");
    h.calendar_term = TermBuilder::parse("rcs:4");
    f.f1 = TermBuilder::parse("rcs:4");
    f.f2 = TermBuilder::parse("rcs:4");
    f.f3 = TermBuilder::parse("rcs:4");
  }
  if (f.family == MsmSpec::Family::TrialSpecific) f.f3 = TermBuilder::none();

  const std::size_t ncells = config.cells.size();
  std::vector<double> true_frac(ncells);
  for (std::size_t c = 0; c < ncells; ++c)
    true_frac[c] =
        true_ve(config.sim.scenario, config.cells[c].j, config.cells[c].k);

  std::vector<std::vector<double>> ve_pct(ncells);
  std::vector<double> se_sum(ncells, 0.0);
  std::vector<long> covered(ncells, 0);
  long teh_rejects = 0;
  int failures = 0, used = 0;

  std::optional<Eigen::VectorXd> warm_zeta, warm_kappa, warm_alpha;
  bool knots_placed = config.basis != TimeBasis::Spline;

  for (int r = 1; r <= config.replications; ++r) {
    SimConfig sim = config.sim;
    sim.seed = config.sim.seed ^ static_cast<std::uint64_t>(r);
    try {
      const Cohort cohort = simulate_cohort(sim, table);
      Panel panel = expand_trials(cohort, protocol);
      if (!knots_placed) {
        place_panel_knots(panel, g, h, f);
        knots_placed = true;
      }
      const DesignContext ctx(cohort, protocol, g, h, f);
      NuisanceFits fits;
      fits.zeta = fit_propensity(panel, ctx, warm_zeta);
      fits.kappa = fit_censoring(panel, ctx, warm_kappa);
      compute_ip_weights(panel, ctx, fits, config.truncate_percentile);
      const FitResult msm = fit_msm(panel, ctx, warm_alpha);
      warm_zeta = fits.zeta.coef;
      warm_kappa = fits.kappa.coef;
      warm_alpha = msm.coef;

      const StackedModel model{&panel, &ctx, fits.truncation_bounds};
      const ThetaLayout layout =
          make_layout(ctx, config.cells, config.run_teh);
      const ThetaHat theta = stack_theta(model, fits, msm, layout);
      const SandwichOutput sandwich =
          sandwich_variance(model, theta, BreadMode::Analytic);
      VESurface surface =
          ve_surface(msm.coef, config.cells, ctx.f_spec(), protocol);
      ve_ci(surface, theta, sandwich, config.gamma);

      for (std::size_t c = 0; c < ncells; ++c) {
        const auto& cell = surface.cells[c];
        ve_pct[c].push_back(100.0 * cell.ve);
        se_sum[c] += 100.0 * std::exp(cell.log_rr) * *cell.se_log_rr;
        if (*cell.ci_lo <= true_frac[c] && true_frac[c] <= *cell.ci_hi)
          ++covered[c];
      }
      if (config.run_teh) {
        const TehResult teh = teh_test(model, theta, sandwich);
        if (teh.p_one_sided < 0.05) ++teh_rejects;
      }
      ++used;
    } catch (const Error& err) {
      ++failures;
      std::fprintf(stderr, "replication %d failed: %s\n", r, err.what());
    }
    if (config.progress && r % 50 == 0)
      std::fprintf(stderr, "  replication %d/%d\n", r, config.replications);
  }

  ReplicationSummary out;
  out.config = config;
  out.replications_used = used;
  out.failures = failures;
  out.teh_ran = config.run_teh;
  if (config.run_teh && used > 0)
    out.teh_rejection = static_cast<double>(teh_rejects) / used;
  for (std::size_t c = 0; c < ncells; ++c) {
    CellSummary cs;
    cs.cell = config.cells[c];
    cs.true_ve_pct = 100.0 * true_frac[c];
    if (used > 0) {
      cs.mean_ve_pct = mean(ve_pct[c]);
      cs.bias_pp = cs.mean_ve_pct - cs.true_ve_pct;
      cs.ese = used > 1 ? sample_sd(ve_pct[c]) : 0.0;
      cs.ase = se_sum[c] / used;
      cs.coverage = static_cast<double>(covered[c]) / used;
    }
    out.cells.push_back(cs);
  }
  return out;
}

void write_replication_summary(std::ostream& out,
                               const ReplicationSummary& summary) {
  const ReplicationConfig& cfg = summary.config;
  char buf[256];
  MsmSpec probe;
  probe.family = cfg.family;
  std::snprintf(buf, sizeof(buf),
                "scenario %d\nmodel %s\nbasis %s\nn %d\ntau %d\ntrials %d\n"
                "replications %d\nused %d\nfailures %d\nseed %llu\n",
                static_cast<int>(cfg.sim.scenario),
                probe.family_name().c_str(),
                cfg.basis == TimeBasis::Spline ? "spline" : "poly", cfg.sim.n,
                cfg.sim.tau, cfg.sim.num_trials, cfg.replications,
                summary.replications_used, summary.failures,
                static_cast<unsigned long long>(cfg.sim.seed));
  out << buf;
  out << "cell true_ve mean_ve bias ese ase coverage\n";
  for (const auto& cs : summary.cells) {
    std::snprintf(buf, sizeof(buf),
                  "j%d_k%d %.4f %.4f %.4f %.4f %.4f %.4f\n", cs.cell.j,
                  cs.cell.k, cs.true_ve_pct, cs.mean_ve_pct, cs.bias_pp,
                  cs.ese, cs.ase, 100.0 * cs.coverage);
    out << buf;
  }
  if (summary.teh_ran) {
    std::snprintf(buf, sizeof(buf), "teh_rejection %.4f\n",
                  100.0 * summary.teh_rejection);
    out << buf;
  } else {
    out << "teh_rejection not_run\n";
  }
}

}  // namespace nte
