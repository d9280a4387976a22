#pragma once

#include <optional>
#include <span>
#include <vector>

#include "nte/msm.hpp"
#include "nte/weights.hpp"

namespace nte {

// Flat layout of the stacked parameter theta = (zeta, kappa, alpha,
// rho-grid, beta). kappa is absent with unit censoring weights; the rho grid
// and the TEH slope beta are optional plug-in blocks.
struct ThetaLayout {
  int zeta_dim = 0;
  int kappa_dim = 0;
  int alpha_dim = 0;
  std::vector<GridCell> rho_cells;
  bool has_beta = false;
  int beta_k_max = 0;  // AUC summation range when has_beta

  int zeta_off = 0;
  int kappa_off = 0;
  int alpha_off = 0;
  int rho_off = 0;
  int beta_off = 0;
  int dim = 0;

  int rho_index(const GridCell& cell) const;  // flat index; throws if absent
};

struct ThetaHat {
  ThetaLayout layout;
  Eigen::VectorXd flat;

  auto zeta() const { return flat.segment(layout.zeta_off, layout.zeta_dim); }
  auto kappa() const {
    return flat.segment(layout.kappa_off, layout.kappa_dim);
  }
  auto alpha() const {
    return flat.segment(layout.alpha_off, layout.alpha_dim);
  }
};

// Everything the stacked estimating equations see.
struct StackedModel {
  const Panel* panel = nullptr;
  const DesignContext* ctx = nullptr;
  std::optional<std::pair<double, double>> truncation;
};

ThetaLayout make_layout(const DesignContext& ctx,
                        std::vector<GridCell> rho_cells, bool with_beta,
                        int beta_k_max = 0);

// Stacks fitted blocks; rho entries are log_rr at alpha-hat and beta is the
// least-squares AUC slope, so the plug-in residual rows are zero at theta-hat.
ThetaHat stack_theta(const StackedModel& model, const NuisanceFits& fits,
                     const FitResult& msm_fit, ThetaLayout layout);

// Per-person stacked estimating-function value at theta.
Eigen::VectorXd psi_contrib(const StackedModel& model, const ThetaHat& theta,
                            int person);

enum class BreadMode { FiniteDifference, Analytic };

struct SandwichOutput {
  ThetaLayout layout;
  Eigen::MatrixXd bread;     // A-hat = average of -d psi / d theta
  Eigen::MatrixXd meat;      // B-hat = average of psi psi'
  Eigen::MatrixXd variance;  // A^-1 B A^-T; Var(theta-hat) ~ variance / n
  double bread_condition = 0.0;
  long n = 0;  // persons the averages run over
};

// Empirical sandwich for the full stack. FiniteDifference perturbs each
// (zeta, kappa, alpha) coordinate with central differences (step
// max(1e-6, 1e-6 |theta_d|)) exploiting the block-triangular dependence;
// Analytic assembles the same blocks in closed form (the plug-in rho/beta
// rows use finite differences of nu/slope over alpha in both modes).
SandwichOutput sandwich_variance(const StackedModel& model,
                                 const ThetaHat& theta,
                                 BreadMode mode = BreadMode::FiniteDifference);

// Attaches SEs and level-(1-gamma) pointwise CIs to matching surface cells:
// VE bounds are 1 - exp(rho-hat -+ z_{1-gamma/2} sqrt(V/n)).
void ve_ci(VESurface& surface, const ThetaHat& theta,
           const SandwichOutput& sandwich, double gamma);

// AUC_j = sum_{k=1..k_max} VE_j(k) for j = 0..J at a parameter vector.
std::vector<double> compute_auc(const Eigen::VectorXd& alpha,
                                const MsmSpec& spec,
                                const ProtocolConfig& protocol, int k_max);

// Least-squares (intercept, slope) of y on 0..J.
std::pair<double, double> auc_slope(std::span<const double> auc);

struct TehResult {
  std::vector<double> auc;
  double beta0 = 0.0;
  double beta = 0.0;
  double se = 0.0;
  double u = 0.0;
  double p_one_sided = 0.0;  // alternative: VE decreasing across trials
  double p_two_sided = 0.0;
  int k_max = 0;
};

TehResult teh_test(const StackedModel& model, const ThetaHat& theta,
                   const SandwichOutput& sandwich);

}  // namespace nte
