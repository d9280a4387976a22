#include "nte/weights.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "nte/stats.hpp"

namespace nte {

namespace {

const double* person_x(const Panel& panel, std::int32_t person) {
  return panel.cohort->persons[static_cast<std::size_t>(person)].x.data();
}

}  // namespace

FitResult fit_propensity(const Panel& panel, const DesignContext& ctx,
                         std::optional<Eigen::VectorXd> start) {
  bool any0 = false, any1 = false;
  for (const auto& span : panel.trials) {
    (span.z ? any1 : any0) = true;
  }
  if (!any0 || !any1) {
    throw SeparationError(
        "propensity fit: every enrollment record has the same regimen "
        "indicator; the propensity model is not estimable");
  }
  const int q = ctx.g_dim();
  const auto names = ctx.g_spec().column_names(ctx.cohort());
  GlmOptions opt;
  opt.column_names = &names;
  opt.start = std::move(start);
  std::vector<double> buf(static_cast<std::size_t>(q));
  return fit_weighted_logistic_stream(
      q,
      [&](auto&& visit) {
        for (const auto& span : panel.trials) {
          ctx.g_row(span.j, person_x(panel, span.person), buf.data());
          visit(buf.data(), static_cast<double>(span.z), 1.0);
        }
      },
      opt);
}

FitResult fit_censoring(const Panel& panel, const DesignContext& ctx,
                        std::optional<Eigen::VectorXd> start) {
  const auto& spec = ctx.h_spec();
  if (!spec.fits_model()) {
    throw ConfigError("fit_censoring called with a unit-weight censoring spec");
  }
  bool any_censored = false, any_row = false;
  for (const auto& span : panel.trials) {
    if (!spec.applies_to_arm(span.z)) continue;
    for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
      any_row = true;
      if (panel.rows[static_cast<std::size_t>(ri)].r == 0) any_censored = true;
    }
  }
  if (!any_row) {
    throw ValidationError("censoring fit: no at-risk follow-up rows");
  }
  if (!any_censored) {
    throw SeparationError(
        "censoring fit: no artificial censoring anywhere; the hazard model "
        "is degenerate. Use unit censoring weights (censoring arm = unit) "
        "instead.");
  }
  const int q = ctx.h_dim();
  const auto names = spec.column_names(ctx.cohort());
  GlmOptions opt;
  opt.column_names = &names;
  opt.start = std::move(start);
  std::vector<double> buf(static_cast<std::size_t>(q));
  return fit_weighted_logistic_stream(
      q,
      [&](auto&& visit) {
        for (const auto& span : panel.trials) {
          if (!spec.applies_to_arm(span.z)) continue;
          const double* x = person_x(panel, span.person);
          for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
            const auto& row = panel.rows[static_cast<std::size_t>(ri)];
            ctx.h_row(span.j, row.k, span.z, x, buf.data());
            visit(buf.data(), static_cast<double>(row.r), 1.0);
          }
        }
      },
      opt);
}

WeightDiagnostics compute_ip_weights(Panel& panel, const DesignContext& ctx,
                                     NuisanceFits& fits,
                                     std::optional<double> truncate_percentile) {
  const auto& hspec = ctx.h_spec();
  const bool have_kappa = hspec.fits_model();
  if (have_kappa && fits.kappa.coef.size() != ctx.h_dim()) {
    throw ValidationError("compute_ip_weights: censoring fit missing");
  }
  std::vector<double> gbuf(static_cast<std::size_t>(ctx.g_dim()));
  std::vector<double> hbuf(static_cast<std::size_t>(std::max(1, ctx.h_dim())));

  for (const auto& span : panel.trials) {
    const auto& rec = panel.cohort->persons[static_cast<std::size_t>(span.person)];
    const double* x = rec.x.data();
    ctx.g_row(span.j, x, gbuf.data());
    double eta = 0.0;
    for (int c = 0; c < ctx.g_dim(); ++c) eta += fits.zeta.coef[c] * gbuf[c];
    const double e = expit(eta);
    if (e <= 0.0 || e >= 1.0) {
      throw PositivityError("propensity 0 or 1 for person " + rec.id +
                            " at trial " + std::to_string(span.j));
    }
    const double arm_factor = span.z ? 1.0 / e : 1.0 / (1.0 - e);
    double cum_log_d = 0.0;
    panel.weight[static_cast<std::size_t>(span.row_begin)] = arm_factor;
    for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
      const auto& row = panel.rows[static_cast<std::size_t>(ri)];
      if (have_kappa && hspec.applies_to_arm(span.z)) {
        ctx.h_row(span.j, row.k, span.z, x, hbuf.data());
        double heta = 0.0;
        for (int c = 0; c < ctx.h_dim(); ++c) {
          heta += fits.kappa.coef[c] * hbuf[c];
        }
        const double d = expit(heta);
        if (d <= 0.0) {
          throw PositivityError(
              "censoring hazard gives d = 0 for person " + rec.id +
              " at trial " + std::to_string(span.j) + " week " +
              std::to_string(row.k));
        }
        cum_log_d += std::log(d);
      }
      panel.weight[static_cast<std::size_t>(ri)] =
          std::exp(-cum_log_d) * arm_factor;
    }
  }

  WeightDiagnostics diag;
  if (truncate_percentile) {
    const double p = *truncate_percentile;
    if (p < 0.0 || p >= 50.0) {
      throw ConfigError("weight truncation percentile must be in [0, 50)");
    }
    std::vector<double> w;
    w.reserve(panel.rows.size());
    for (const auto& span : panel.trials) {
      for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
        w.push_back(panel.weight[static_cast<std::size_t>(ri)]);
      }
    }
    std::sort(w.begin(), w.end());
    const double lo = quantile_type7(w, p / 100.0);
    const double hi = quantile_type7(w, 1.0 - p / 100.0);
    for (const auto& span : panel.trials) {
      for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
        double& wt = panel.weight[static_cast<std::size_t>(ri)];
        wt = std::clamp(wt, lo, hi);
      }
    }
    diag.truncation_bounds = {lo, hi};
    fits.truncation_bounds = {lo, hi};
  }

  std::map<int, std::vector<double>> by_trial;
  std::map<int, std::pair<long, double>> k0;
  for (const auto& span : panel.trials) {
    auto& v = by_trial[span.j];
    for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
      v.push_back(panel.weight[static_cast<std::size_t>(ri)]);
    }
    auto& [cnt, sum] = k0[span.j];
    ++cnt;
    sum += panel.weight[static_cast<std::size_t>(span.row_begin)];
  }
  for (auto& [j, v] : by_trial) {
    WeightDiagnostics::TrialStats st;
    st.j = j;
    st.n_at_risk_rows = static_cast<long>(v.size());
    if (!v.empty()) {
      std::sort(v.begin(), v.end());
      st.mean = mean(v);
      st.max = v.back();
      st.p99 = quantile_type7(v, 0.99);
    }
    st.k0_count = k0[j].first;
    st.k0_weight_sum = k0[j].second;
    diag.per_trial.push_back(st);
  }
  return diag;
}

}  // namespace nte
