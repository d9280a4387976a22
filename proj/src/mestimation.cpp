#include "nte/mestimation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Dense>

#include "nte/stats.hpp"

namespace nte {

namespace {

std::string cell_label(const GridCell& cell) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "(j=%d, k=%d)", cell.j, cell.k);
  return buf;
}

double fd_step(double value) { return std::max(1e-6, 1e-6 * std::abs(value)); }

struct Workspace {
  std::vector<double> g, h, f;
  explicit Workspace(const ThetaLayout& lay)
      : g(lay.zeta_dim), h(std::max(lay.kappa_dim, 1)), f(lay.alpha_dim) {}
};

double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Adds one person's (zeta, kappa, alpha) score contributions at the given
// parameter values. Null out pointers mask a block off, which also skips the
// work it alone needs (the censoring pass still runs when alpha is wanted
// because the weights depend on kappa).
void person_scores(const StackedModel& model, const ThetaLayout& lay,
                   const double* zeta, const double* kappa,
                   const double* alpha, int person, Workspace& ws,
                   double* out_zeta, double* out_kappa, double* out_alpha) {
  const Panel& panel = *model.panel;
  const DesignContext& ctx = *model.ctx;
  const CensoringSpec& hspec = ctx.h_spec();
  const double* x = panel.cohort->persons[person].x.data();
  const bool want_z = out_zeta != nullptr;
  const bool want_k = out_kappa != nullptr && lay.kappa_dim > 0;
  const bool want_a = out_alpha != nullptr;

  for (auto ti = panel.person_trial_begin[person];
       ti < panel.person_trial_begin[person + 1]; ++ti) {
    const auto& span = panel.trials[ti];
    const int z = span.z;
    double arm = 0.0;
    if (want_z || want_a) {
      ctx.g_row(span.j, x, ws.g.data());
      const double e = expit(dot(zeta, ws.g.data(), lay.zeta_dim));
      if (want_z) {
        const double rz = static_cast<double>(z) - e;
        for (int i = 0; i < lay.zeta_dim; ++i) out_zeta[i] += rz * ws.g[i];
      }
      if (want_a) {
        arm = z ? 1.0 / e : 1.0 / (1.0 - e);
        if (!std::isfinite(arm))
          throw PositivityError(
              "propensity reached 0 or 1 while evaluating the stacked "
              "scores (trial " +
              std::to_string(span.j) + ")");
      }
    }
    const bool in_cens =
        hspec.fits_model() && hspec.applies_to_arm(z) && lay.kappa_dim > 0;
    double cum_log_d = 0.0;
    for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
      const auto& row = panel.rows[ri];
      if (in_cens && (want_k || want_a)) {
        ctx.h_row(span.j, row.k, z, x, ws.h.data());
        const double d = expit(dot(kappa, ws.h.data(), lay.kappa_dim));
        if (want_k) {
          const double rr = static_cast<double>(row.r) - d;
          for (int i = 0; i < lay.kappa_dim; ++i) out_kappa[i] += rr * ws.h[i];
        }
        cum_log_d += std::log(d);
      }
      if (want_a && row.r == 1) {
        double w = std::exp(-cum_log_d) * arm;
        if (model.truncation)
          w = std::clamp(w, model.truncation->first, model.truncation->second);
        ctx.f_row(span.j, row.k, z, ws.f.data());
        const double lam = expit(dot(alpha, ws.f.data(), lay.alpha_dim));
        const double resid = w * (static_cast<double>(row.y) - lam);
        for (int i = 0; i < lay.alpha_dim; ++i) out_alpha[i] += resid * ws.f[i];
      }
    }
  }
}

// Panel-wide score sums for the masked blocks, written into a flat
// layout-sized buffer (only the requested block segments are touched).
void total_scores(const StackedModel& model, const ThetaLayout& lay,
                  const double* zeta, const double* kappa, const double* alpha,
                  bool want_z, bool want_k, bool want_a, Workspace& ws,
                  Eigen::VectorXd& out) {
  double* oz = want_z ? out.data() + lay.zeta_off : nullptr;
  double* ok = want_k ? out.data() + lay.kappa_off : nullptr;
  double* oa = want_a ? out.data() + lay.alpha_off : nullptr;
  if (oz) std::fill(oz, oz + lay.zeta_dim, 0.0);
  if (ok) std::fill(ok, ok + lay.kappa_dim, 0.0);
  if (oa) std::fill(oa, oa + lay.alpha_dim, 0.0);
  const int n = static_cast<int>(model.panel->n_persons());
  for (int person = 0; person < n; ++person)
    person_scores(model, lay, zeta, kappa, alpha, person, ws, oz, ok, oa);
}

// nu(alpha): the plug-in targets, rho values for every grid cell followed by
// the AUC slope when the layout carries beta.
Eigen::VectorXd plugin_targets(const Eigen::VectorXd& alpha,
                               const ThetaLayout& lay, const MsmSpec& spec,
                               const ProtocolConfig& protocol) {
  const int n_rho = static_cast<int>(lay.rho_cells.size());
  Eigen::VectorXd nu(n_rho + (lay.has_beta ? 1 : 0));
  for (int a = 0; a < n_rho; ++a)
    nu[a] =
        log_rr(alpha, lay.rho_cells[a].j, lay.rho_cells[a].k, spec, protocol);
  if (lay.has_beta) {
    const auto auc = compute_auc(alpha, spec, protocol, lay.beta_k_max);
    nu[n_rho] = auc_slope(auc).second;
  }
  return nu;
}

// Central-difference derivative of the plug-in targets w.r.t. alpha, filling
// the rho/beta rows of the bread across the alpha columns.
void fill_plugin_bread(const StackedModel& model, const ThetaHat& theta,
                       Eigen::MatrixXd& bread) {
  const ThetaLayout& lay = theta.layout;
  const int n_rho = static_cast<int>(lay.rho_cells.size());
  if (n_rho == 0 && !lay.has_beta) return;
  const MsmSpec& spec = model.ctx->f_spec();
  const ProtocolConfig& protocol = model.ctx->protocol();
  for (int a = 0; a < n_rho; ++a)
    bread(lay.rho_off + a, lay.rho_off + a) = -1.0;
  if (lay.has_beta) bread(lay.beta_off, lay.beta_off) = -1.0;

  Eigen::VectorXd alpha = theta.alpha();
  for (int c = 0; c < lay.alpha_dim; ++c) {
    const double h = fd_step(alpha[c]);
    const double keep = alpha[c];
    alpha[c] = keep + h;
    const Eigen::VectorXd hi = plugin_targets(alpha, lay, spec, protocol);
    alpha[c] = keep - h;
    const Eigen::VectorXd lo = plugin_targets(alpha, lay, spec, protocol);
    alpha[c] = keep;
    for (int a = 0; a < n_rho; ++a)
      bread(lay.rho_off + a, lay.alpha_off + c) = (hi[a] - lo[a]) / (2.0 * h);
    if (lay.has_beta)
      bread(lay.beta_off, lay.alpha_off + c) =
          (hi[n_rho] - lo[n_rho]) / (2.0 * h);
  }
}

void fill_bread_fd(const StackedModel& model, const ThetaHat& theta,
                   Eigen::MatrixXd& bread) {
  const ThetaLayout& lay = theta.layout;
  const double n = static_cast<double>(model.panel->n_persons());
  Workspace ws(lay);
  Eigen::VectorXd flat = theta.flat;
  Eigen::VectorXd hi = Eigen::VectorXd::Zero(lay.dim);
  Eigen::VectorXd lo = Eigen::VectorXd::Zero(lay.dim);

  // Which score blocks a coordinate's perturbation can move: zeta feeds the
  // weights, kappa feeds the weights, alpha only feeds its own score.
  const int m1 = lay.zeta_dim + lay.kappa_dim + lay.alpha_dim;
  for (int c = 0; c < m1; ++c) {
    const bool is_zeta = c < lay.zeta_dim;
    const bool is_kappa = !is_zeta && c < lay.zeta_dim + lay.kappa_dim;
    const bool wz = is_zeta;
    const bool wk = is_kappa;
    const double h = fd_step(flat[c]);
    const double keep = flat[c];
    const double* zeta = flat.data() + lay.zeta_off;
    const double* kappa = flat.data() + lay.kappa_off;
    const double* alpha = flat.data() + lay.alpha_off;
    flat[c] = keep + h;
    total_scores(model, lay, zeta, kappa, alpha, wz, wk, true, ws, hi);
    flat[c] = keep - h;
    total_scores(model, lay, zeta, kappa, alpha, wz, wk, true, ws, lo);
    flat[c] = keep;
    const double scale = -1.0 / (2.0 * h * n);
    if (wz)
      for (int r = 0; r < lay.zeta_dim; ++r)
        bread(lay.zeta_off + r, c) =
            (hi[lay.zeta_off + r] - lo[lay.zeta_off + r]) * scale;
    if (wk)
      for (int r = 0; r < lay.kappa_dim; ++r)
        bread(lay.kappa_off + r, c) =
            (hi[lay.kappa_off + r] - lo[lay.kappa_off + r]) * scale;
    for (int r = 0; r < lay.alpha_dim; ++r)
      bread(lay.alpha_off + r, c) =
          (hi[lay.alpha_off + r] - lo[lay.alpha_off + r]) * scale;
  }
}

void fill_bread_analytic(const StackedModel& model, const ThetaHat& theta,
                         Eigen::MatrixXd& bread) {
  const ThetaLayout& lay = theta.layout;
  const Panel& panel = *model.panel;
  const DesignContext& ctx = *model.ctx;
  const CensoringSpec& hspec = ctx.h_spec();
  const double* zeta = theta.flat.data() + lay.zeta_off;
  const double* kappa = theta.flat.data() + lay.kappa_off;
  const double* alpha = theta.flat.data() + lay.alpha_off;
  const int gd = lay.zeta_dim, hd = lay.kappa_dim, fdim = lay.alpha_dim;

  Workspace ws(lay);
  std::vector<double> cvec(std::max(hd, 1));  // sum_{m<=k} (1 - d_m) h_m
  Eigen::MatrixXd azz = Eigen::MatrixXd::Zero(gd, gd);
  Eigen::MatrixXd akk = Eigen::MatrixXd::Zero(std::max(hd, 1), std::max(hd, 1));
  Eigen::MatrixXd aaa = Eigen::MatrixXd::Zero(fdim, fdim);
  Eigen::MatrixXd aaz = Eigen::MatrixXd::Zero(fdim, gd);
  Eigen::MatrixXd aak = Eigen::MatrixXd::Zero(fdim, std::max(hd, 1));

  for (const auto& span : panel.trials) {
    const double* x = panel.cohort->persons[span.person].x.data();
    const int z = span.z;
    ctx.g_row(span.j, x, ws.g.data());
    const double e = expit(dot(zeta, ws.g.data(), gd));
    const double ee = e * (1.0 - e);
    for (int r = 0; r < gd; ++r)
      for (int c = 0; c <= r; ++c) azz(r, c) += ee * ws.g[r] * ws.g[c];
    const double arm = z ? 1.0 / e : 1.0 / (1.0 - e);
    if (!std::isfinite(arm))
      throw PositivityError("propensity reached 0 or 1 in the bread pass");
    const double zres = static_cast<double>(z) - e;
    const bool in_cens = hspec.fits_model() && hspec.applies_to_arm(z) && hd;
    double cum_log_d = 0.0;
    std::fill(cvec.begin(), cvec.end(), 0.0);
    for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
      const auto& row = panel.rows[ri];
      if (in_cens) {
        ctx.h_row(span.j, row.k, z, x, ws.h.data());
        const double d = expit(dot(kappa, ws.h.data(), hd));
        const double dd = d * (1.0 - d);
        for (int r = 0; r < hd; ++r)
          for (int c = 0; c <= r; ++c) akk(r, c) += dd * ws.h[r] * ws.h[c];
        cum_log_d += std::log(d);
        for (int i = 0; i < hd; ++i) cvec[i] += (1.0 - d) * ws.h[i];
      }
      if (row.r == 1) {
        const double w_raw = std::exp(-cum_log_d) * arm;
        double w = w_raw;
        bool clamped = false;
        if (model.truncation) {
          w = std::clamp(w_raw, model.truncation->first,
                         model.truncation->second);
          clamped = w != w_raw;
        }
        ctx.f_row(span.j, row.k, z, ws.f.data());
        const double lam = expit(dot(alpha, ws.f.data(), fdim));
        const double core = w * lam * (1.0 - lam);
        for (int r = 0; r < fdim; ++r)
          for (int c = 0; c <= r; ++c) aaa(r, c) += core * ws.f[r] * ws.f[c];
        // d log W / d zeta = -(z - e) g and d log W / d kappa_m covers the
        // fitted censoring factors, so the cross blocks carry the weight
        // residual; a clamped weight has zero derivative.
        if (!clamped) {
          const double yres = w * (static_cast<double>(row.y) - lam);
          for (int r = 0; r < fdim; ++r) {
            const double fr = yres * ws.f[r];
            for (int c = 0; c < gd; ++c) aaz(r, c) += fr * zres * ws.g[c];
            if (in_cens)
              for (int c = 0; c < hd; ++c) aak(r, c) += fr * cvec[c];
          }
        }
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(panel.n_persons());
  auto put_sym = [&](const Eigen::MatrixXd& m, int off, int dim) {
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < r; ++c) {
        bread(off + r, off + c) = m(r, c) * inv_n;
        bread(off + c, off + r) = m(r, c) * inv_n;
      }
      bread(off + r, off + r) = m(r, r) * inv_n;
    }
  };
  put_sym(azz, lay.zeta_off, gd);
  if (hd) put_sym(akk, lay.kappa_off, hd);
  put_sym(aaa, lay.alpha_off, fdim);
  for (int r = 0; r < fdim; ++r) {
    for (int c = 0; c < gd; ++c)
      bread(lay.alpha_off + r, lay.zeta_off + c) = aaz(r, c) * inv_n;
    for (int c = 0; c < hd; ++c)
      bread(lay.alpha_off + r, lay.kappa_off + c) = aak(r, c) * inv_n;
  }
}

}  // namespace

int ThetaLayout::rho_index(const GridCell& cell) const {
  for (std::size_t a = 0; a < rho_cells.size(); ++a)
    if (rho_cells[a] == cell) return rho_off + static_cast<int>(a);
  throw ValidationError("grid cell " + cell_label(cell) +
                        " is not in the rho block");
}

ThetaLayout make_layout(const DesignContext& ctx,
                        std::vector<GridCell> rho_cells, bool with_beta,
                        int beta_k_max) {
  const ProtocolConfig& protocol = ctx.protocol();
  ThetaLayout lay;
  lay.zeta_dim = ctx.g_dim();
  lay.kappa_dim = ctx.h_spec().fits_model() ? ctx.h_dim() : 0;
  lay.alpha_dim = ctx.f_dim();
  for (const auto& cell : rho_cells) {
    if (cell.j < 0 || cell.j > protocol.J() || cell.k < 1 ||
        cell.k > protocol.K(cell.j))
      throw ValidationError("rho cell " + cell_label(cell) +
                            " is outside the trial-week domain");
    if (std::count(rho_cells.begin(), rho_cells.end(), cell) != 1)
      throw ValidationError("duplicate rho cell " + cell_label(cell));
  }
  lay.rho_cells = std::move(rho_cells);
  lay.has_beta = with_beta;
  if (with_beta) {
    if (protocol.J() < 1)
      throw DomainError("the TEH slope needs at least two trials");
    const int shared = protocol.K(protocol.J());
    lay.beta_k_max = beta_k_max > 0 ? beta_k_max : shared;
    if (lay.beta_k_max < 1 || lay.beta_k_max > shared)
      throw ValidationError(
          "beta_k_max must lie in [1, " + std::to_string(shared) +
          "] so every trial contributes the same AUC range");
  }
  lay.zeta_off = 0;
  lay.kappa_off = lay.zeta_dim;
  lay.alpha_off = lay.kappa_off + lay.kappa_dim;
  lay.rho_off = lay.alpha_off + lay.alpha_dim;
  lay.beta_off = lay.rho_off + static_cast<int>(lay.rho_cells.size());
  lay.dim = lay.beta_off + (lay.has_beta ? 1 : 0);
  return lay;
}

ThetaHat stack_theta(const StackedModel& model, const NuisanceFits& fits,
                     const FitResult& msm_fit, ThetaLayout layout) {
  if (static_cast<int>(fits.zeta.coef.size()) != layout.zeta_dim)
    throw ValidationError("propensity fit dimension does not match layout");
  if (static_cast<int>(fits.kappa.coef.size()) != layout.kappa_dim)
    throw ValidationError("censoring fit dimension does not match layout");
  if (static_cast<int>(msm_fit.coef.size()) != layout.alpha_dim)
    throw ValidationError("MSM fit dimension does not match layout");
  ThetaHat theta;
  theta.flat = Eigen::VectorXd::Zero(layout.dim);
  theta.flat.segment(layout.zeta_off, layout.zeta_dim) = fits.zeta.coef;
  if (layout.kappa_dim)
    theta.flat.segment(layout.kappa_off, layout.kappa_dim) = fits.kappa.coef;
  theta.flat.segment(layout.alpha_off, layout.alpha_dim) = msm_fit.coef;
  const Eigen::VectorXd nu = plugin_targets(
      msm_fit.coef, layout, model.ctx->f_spec(), model.ctx->protocol());
  for (std::size_t a = 0; a < layout.rho_cells.size(); ++a)
    theta.flat[layout.rho_off + static_cast<int>(a)] =
        nu[static_cast<int>(a)];
  if (layout.has_beta)
    theta.flat[layout.beta_off] = nu[static_cast<int>(layout.rho_cells.size())];
  theta.layout = std::move(layout);
  return theta;
}

Eigen::VectorXd psi_contrib(const StackedModel& model, const ThetaHat& theta,
                            int person) {
  const ThetaLayout& lay = theta.layout;
  if (person < 0 || person >= static_cast<int>(model.panel->n_persons()))
    throw ValidationError("person index out of range");
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(lay.dim);
  Workspace ws(lay);
  person_scores(model, lay, theta.flat.data() + lay.zeta_off,
                theta.flat.data() + lay.kappa_off,
                theta.flat.data() + lay.alpha_off, person, ws,
                psi.data() + lay.zeta_off, psi.data() + lay.kappa_off,
                psi.data() + lay.alpha_off);
  if (!lay.rho_cells.empty() || lay.has_beta) {
    const Eigen::VectorXd nu = plugin_targets(
        theta.alpha(), lay, model.ctx->f_spec(), model.ctx->protocol());
    for (std::size_t a = 0; a < lay.rho_cells.size(); ++a)
      psi[lay.rho_off + static_cast<int>(a)] =
          theta.flat[lay.rho_off + static_cast<int>(a)] -
          nu[static_cast<int>(a)];
    if (lay.has_beta)
      psi[lay.beta_off] = theta.flat[lay.beta_off] -
                          nu[static_cast<int>(lay.rho_cells.size())];
  }
  return psi;
}

SandwichOutput sandwich_variance(const StackedModel& model,
                                 const ThetaHat& theta, BreadMode mode) {
  const ThetaLayout& lay = theta.layout;
  const long n = static_cast<long>(model.panel->n_persons());
  if (n < 2) throw ValidationError("sandwich variance needs at least 2 persons");

  SandwichOutput out;
  out.layout = lay;
  out.n = n;
  out.bread = Eigen::MatrixXd::Zero(lay.dim, lay.dim);
  out.meat = Eigen::MatrixXd::Zero(lay.dim, lay.dim);

  // Meat: the (zeta, kappa, alpha) scores vary per person; the plug-in rows
  // are person-invariant residuals (zero at theta-hat up to roundoff), so
  // their cross blocks only need the mean score.
  const int m1 = lay.zeta_dim + lay.kappa_dim + lay.alpha_dim;
  const int m2 = lay.dim - m1;
  {
    Workspace ws(lay);
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(m1);
    Eigen::VectorXd mean_psi = Eigen::VectorXd::Zero(m1);
    Eigen::MatrixXd b11 = Eigen::MatrixXd::Zero(m1, m1);
    for (long person = 0; person < n; ++person) {
      psi.setZero();
      person_scores(model, lay, theta.flat.data() + lay.zeta_off,
                    theta.flat.data() + lay.kappa_off,
                    theta.flat.data() + lay.alpha_off,
                    static_cast<int>(person), ws, psi.data() + lay.zeta_off,
                    psi.data() + lay.kappa_off, psi.data() + lay.alpha_off);
      for (int r = 0; r < m1; ++r)
        for (int c = 0; c <= r; ++c) b11(r, c) += psi[r] * psi[c];
      mean_psi += psi;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    mean_psi *= inv_n;
    for (int r = 0; r < m1; ++r)
      for (int c = 0; c <= r; ++c) {
        out.meat(r, c) = b11(r, c) * inv_n;
        out.meat(c, r) = out.meat(r, c);
      }
    if (m2 > 0) {
      const Eigen::VectorXd nu = plugin_targets(
          theta.alpha(), lay, model.ctx->f_spec(), model.ctx->protocol());
      Eigen::VectorXd resid(m2);
      for (int a = 0; a < m2; ++a) resid[a] = theta.flat[m1 + a] - nu[a];
      for (int r = 0; r < m1; ++r)
        for (int a = 0; a < m2; ++a) {
          out.meat(r, m1 + a) = mean_psi[r] * resid[a];
          out.meat(m1 + a, r) = out.meat(r, m1 + a);
        }
      for (int a = 0; a < m2; ++a)
        for (int b = 0; b < m2; ++b)
          out.meat(m1 + a, m1 + b) = resid[a] * resid[b];
    }
  }

  if (mode == BreadMode::FiniteDifference)
    fill_bread_fd(model, theta, out.bread);
  else
    fill_bread_analytic(model, theta, out.bread);
  fill_plugin_bread(model, theta, out.bread);

  if (!out.bread.allFinite())
    throw SingularError("bread matrix has non-finite entries");
  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.bread);
    const auto& sv = svd.singularValues();
    const double smin = sv[sv.size() - 1];
    if (smin <= 0.0 || sv[0] / smin > 1e14)
      throw SingularError(
          "bread matrix is numerically singular (condition > 1e14); the "
          "stacked model is not identified at the fitted values");
    out.bread_condition = sv[0] / smin;
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(out.bread);
  Eigen::MatrixXd half = lu.solve(out.meat);      // A^-1 B
  out.variance = lu.solve(half.transpose()).transpose();
  out.variance = ((out.variance + out.variance.transpose()) / 2.0).eval();
  return out;
}

void ve_ci(VESurface& surface, const ThetaHat& theta,
           const SandwichOutput& sandwich, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw ValidationError("CI level gamma must be in (0, 1)");
  const ThetaLayout& lay = theta.layout;
  const double q = normal_quantile(1.0 - gamma / 2.0);
  const double n = static_cast<double>(sandwich.n);
  for (auto& cell : surface.cells) {
    const int a = lay.rho_index({cell.j, cell.k});
    const double rho = theta.flat[a];
    const double var = sandwich.variance(a, a);
    if (var < 0.0 && var > -1e-12) {
      cell.se_log_rr = 0.0;
    } else if (var < 0.0) {
      throw SingularError("negative sandwich variance for rho at " +
                          cell_label({cell.j, cell.k}));
    } else {
      cell.se_log_rr = std::sqrt(var / n);
    }
    const double se = *cell.se_log_rr;
    cell.ci_lo = 1.0 - std::exp(rho + q * se);
    cell.ci_hi = 1.0 - std::exp(rho - q * se);
  }
  surface.gamma = gamma;
}

std::vector<double> compute_auc(const Eigen::VectorXd& alpha,
                                const MsmSpec& spec,
                                const ProtocolConfig& protocol, int k_max) {
  if (k_max < 1 || k_max > protocol.K(protocol.J()))
    throw ValidationError("AUC range must fit inside every trial's follow-up");
  std::vector<double> auc(protocol.num_trials, 0.0);
  for (int j = 0; j <= protocol.J(); ++j)
    for (int k = 1; k <= k_max; ++k)
      auc[j] += 1.0 - std::exp(log_rr(alpha, j, k, spec, protocol));
  return auc;
}

std::pair<double, double> auc_slope(std::span<const double> auc) {
  const int n = static_cast<int>(auc.size());
  if (n < 2)
    throw DomainError("the AUC slope needs at least two trials");
  const double jbar = (n - 1) / 2.0;
  double ybar = 0.0;
  for (double v : auc) ybar += v;
  ybar /= n;
  double sxy = 0.0, sxx = 0.0;
  for (int j = 0; j < n; ++j) {
    sxy += (j - jbar) * (auc[j] - ybar);
    sxx += (j - jbar) * (j - jbar);
  }
  const double slope = sxy / sxx;
  return {ybar - slope * jbar, slope};
}

TehResult teh_test(const StackedModel& model, const ThetaHat& theta,
                   const SandwichOutput& sandwich) {
  const ThetaLayout& lay = theta.layout;
  if (!lay.has_beta)
    throw ConfigError("theta layout has no beta block; rebuild with the TEH "
                      "slope included");
  TehResult res;
  res.k_max = lay.beta_k_max;
  res.auc = compute_auc(theta.alpha(), model.ctx->f_spec(),
                        model.ctx->protocol(), lay.beta_k_max);
  std::tie(res.beta0, res.beta) = auc_slope(res.auc);
  const double var = sandwich.variance(lay.beta_off, lay.beta_off);
  if (var <= 0.0)
    throw SingularError("non-positive sandwich variance for the TEH slope");
  res.se = std::sqrt(var / static_cast<double>(sandwich.n));
  res.u = res.beta / res.se;
  res.p_one_sided = normal_cdf(res.u);
  res.p_two_sided = 2.0 * normal_cdf(-std::abs(res.u));
  return res;
}

}  // namespace nte
