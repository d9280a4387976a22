#pragma once

#include <optional>
#include <vector>

#include "nte/design.hpp"
#include "nte/glm.hpp"

namespace nte {

struct WeightDiagnostics {
  struct TrialStats {
    int j = 0;
    long n_at_risk_rows = 0;  // k >= 1
    double mean = 0.0;
    double max = 0.0;
    double p99 = 0.0;
    long k0_count = 0;
    double k0_weight_sum = 0.0;
  };
  std::vector<TrialStats> per_trial;
  std::optional<std::pair<double, double>> truncation_bounds;
};

struct NuisanceFits {
  FitResult zeta;
  FitResult kappa;  // empty when the censoring model is Unit
  std::optional<std::pair<double, double>> truncation_bounds;
};

// Pooled logistic propensity fit on the k = 0 enrollment rows (outcome Z_j).
FitResult fit_propensity(const Panel& panel, const DesignContext& ctx,
                         std::optional<Eigen::VectorXd> start = {});

// Pooled logistic censoring-hazard fit on at-risk rows with k >= 1 in the
// arm(s) the spec covers (outcome R_j(k)).
FitResult fit_censoring(const Panel& panel, const DesignContext& ctx,
                        std::optional<Eigen::VectorXd> start = {});

// Fills panel.weight with W_j(k) = [prod_{m<=k} d_jm]^-1 [z/e + (1-z)/(1-e)];
// k = 0 rows carry the treatment factor only. Optional symmetric percentile
// truncation (clamp at the P and 100-P percentiles of the k >= 1 weights).
WeightDiagnostics compute_ip_weights(
    Panel& panel, const DesignContext& ctx, NuisanceFits& fits,
    std::optional<double> truncate_percentile = std::nullopt);

}  // namespace nte
