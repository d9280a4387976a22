#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "nte/design.hpp"
#include "nte/glm.hpp"

namespace nte {

struct GridCell {
  int j = 0;
  int k = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

// Weighted pooled logistic MSM fit over at-risk rows with k >= 1, r = 1.
FitResult fit_msm(const Panel& panel, const DesignContext& ctx,
                  std::optional<Eigen::VectorXd> start = {});

// Model hazard lambda_j^z(k) at a parameter vector.
double hazard(const Eigen::VectorXd& alpha, int j, int k, int z,
              const MsmSpec& spec, const ProtocolConfig& protocol);

// 1 - prod_m (1 - hazards[m]): cumulative risk from weekly hazards.
double cumulative_risk(std::span<const double> hazards);

// rho_j(k) = log RR_j(k) built from the fitted hazards via the product
// formula. Throws DomainError when the comparator risk is numerically zero.
double log_rr(const Eigen::VectorXd& alpha, int j, int k, const MsmSpec& spec,
              const ProtocolConfig& protocol);

struct VESurface {
  struct Cell {
    int j = 0;
    int k = 0;
    double ve = 0.0;      // 1 - RR, as a fraction
    double log_rr = 0.0;
    std::optional<double> se_log_rr;
    std::optional<double> ci_lo;  // on the VE scale
    std::optional<double> ci_hi;
  };
  std::vector<Cell> cells;
  double gamma = 0.05;  // CI level used when intervals are attached
};

// Default grid: every (j, k) with 0 <= j <= J and 1 <= k <= K_j.
std::vector<GridCell> full_grid(const ProtocolConfig& protocol);

VESurface ve_surface(const Eigen::VectorXd& alpha,
                     std::span<const GridCell> grid, const MsmSpec& spec,
                     const ProtocolConfig& protocol);

void write_surface(std::ostream& out, const VESurface& surface);

}  // namespace nte
