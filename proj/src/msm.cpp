#include "nte/msm.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "nte/stats.hpp"

namespace nte {

FitResult fit_msm(const Panel& panel, const DesignContext& ctx,
                  std::optional<Eigen::VectorXd> start) {
  const int q = ctx.f_dim();
  const auto names = ctx.f_spec().column_names();
  GlmOptions opt;
  opt.column_names = &names;
  opt.start = std::move(start);
  bool any_event = false, any_survivor = false;
  for (const auto& span : panel.trials) {
    for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
      const auto& row = panel.rows[static_cast<std::size_t>(ri)];
      if (row.r != 1) continue;
      (row.y ? any_event : any_survivor) = true;
    }
  }
  if (!any_event || !any_survivor) {
    throw SeparationError(
        "outcome fit: the at-risk rows have a constant outcome; the hazard "
        "model is not estimable");
  }
  std::vector<double> buf(static_cast<std::size_t>(q));
  return fit_weighted_logistic_stream(
      q,
      [&](auto&& visit) {
        for (const auto& span : panel.trials) {
          for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
            const auto& row = panel.rows[static_cast<std::size_t>(ri)];
            if (row.r != 1) continue;
            ctx.f_row(span.j, row.k, span.z, buf.data());
            visit(buf.data(), static_cast<double>(row.y),
                  panel.weight[static_cast<std::size_t>(ri)]);
          }
        }
      },
      opt);
}

double hazard(const Eigen::VectorXd& alpha, int j, int k, int z,
              const MsmSpec& spec, const ProtocolConfig& protocol) {
  const auto x = build_design(j, k, z, spec, protocol);
  double eta = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) {
    eta += alpha[static_cast<Eigen::Index>(c)] * x[c];
  }
  return expit(eta);
}

double cumulative_risk(std::span<const double> hazards) {
  double log_surv = 0.0;
  for (double lam : hazards) log_surv += std::log1p(-lam);
  return -std::expm1(log_surv);
}

namespace {

double risk_under(const Eigen::VectorXd& alpha, int j, int k, int z,
                  const MsmSpec& spec, const ProtocolConfig& protocol) {
  std::vector<double> lams(static_cast<std::size_t>(k));
  for (int m = 1; m <= k; ++m) {
    lams[static_cast<std::size_t>(m - 1)] = hazard(alpha, j, m, z, spec,
                                                   protocol);
  }
  return cumulative_risk(lams);
}

}  // namespace

double log_rr(const Eigen::VectorXd& alpha, int j, int k, const MsmSpec& spec,
              const ProtocolConfig& protocol) {
  if (k < 1) throw DomainError("log_rr: k must be >= 1");
  const double risk0 = risk_under(alpha, j, k, 0, spec, protocol);
  const double risk1 = risk_under(alpha, j, k, 1, spec, protocol);
  if (!(risk0 > 0.0)) {
    throw DomainError("log_rr: comparator risk is numerically zero at (j=" +
                      std::to_string(j) + ", k=" + std::to_string(k) + ")");
  }
  return std::log(risk1) - std::log(risk0);
}

std::vector<GridCell> full_grid(const ProtocolConfig& protocol) {
  std::vector<GridCell> grid;
  for (int j = 0; j <= protocol.J(); ++j) {
    for (int k = 1; k <= protocol.K(j); ++k) grid.push_back({j, k});
  }
  return grid;
}

VESurface ve_surface(const Eigen::VectorXd& alpha,
                     std::span<const GridCell> grid, const MsmSpec& spec,
                     const ProtocolConfig& protocol) {
  VESurface surf;
  surf.cells.reserve(grid.size());
  for (const auto& cell : grid) {
    VESurface::Cell out;
    out.j = cell.j;
    out.k = cell.k;
    out.log_rr = log_rr(alpha, cell.j, cell.k, spec, protocol);
    out.ve = 1.0 - std::exp(out.log_rr);
    surf.cells.push_back(out);
  }
  return surf;
}

void write_surface(std::ostream& out, const VESurface& surface) {
  out << "j,k,ve,log_rr,se_log_rr,ci_lo,ci_hi\n";
  char buf[192];
  for (const auto& c : surface.cells) {
    int n = std::snprintf(buf, sizeof(buf), "%d,%d,%.8g,%.8g", c.j, c.k, c.ve,
                          c.log_rr);
    auto opt_field = [&](const std::optional<double>& v) {
      if (v) {
        n += std::snprintf(buf + n, sizeof(buf) - static_cast<std::size_t>(n),
                           ",%.8g", *v);
      } else {
        n += std::snprintf(buf + n, sizeof(buf) - static_cast<std::size_t>(n),
                           ",");
      }
    };
    opt_field(c.se_log_rr);
    opt_field(c.ci_lo);
    opt_field(c.ci_hi);
    out << buf << '\n';
  }
}

}  // namespace nte
