#pragma once

#include <vector>

#include "nte/cohort.hpp"
#include "nte/model_spec.hpp"

namespace nte {

// Precomputed time-term values so per-row design assembly in the fitting and
// variance loops is table lookups plus covariate copies. Time arguments are
// integers bounded by tau, so each term is evaluated once per value.
class DesignContext {
 public:
  DesignContext(const Cohort& cohort, const ProtocolConfig& protocol,
                const PropensitySpec& g, const CensoringSpec& h,
                const MsmSpec& f);

  int g_dim() const { return g_dim_; }
  int h_dim() const { return h_dim_; }
  int f_dim() const { return f_dim_; }

  const PropensitySpec& g_spec() const { return g_; }
  const CensoringSpec& h_spec() const { return h_; }
  const MsmSpec& f_spec() const { return f_; }
  const ProtocolConfig& protocol() const { return protocol_; }
  const Cohort& cohort() const { return cohort_; }

  void g_row(int j, const double* x, double* out) const {
    out[0] = 1.0;
    const double* t = trial_vals_.data() +
                      static_cast<std::size_t>(j) * trial_cols_;
    for (int c = 0; c < trial_cols_; ++c) out[1 + c] = t[c];
    double* p = out + 1 + trial_cols_;
    for (int c : g_.cov_idx) *p++ = x[c];
  }

  void h_row(int j, int k, int z, const double* x, double* out) const {
    out[0] = 1.0;
    const double* t = hcal_vals_.data() +
                      static_cast<std::size_t>(j + k) * hcal_cols_;
    for (int c = 0; c < hcal_cols_; ++c) out[1 + c] = t[c];
    double* p = out + 1 + hcal_cols_;
    if (h_.include_z) *p++ = static_cast<double>(z);
    for (int c : h_.cov_idx) *p++ = x[c];
  }

  void f_row(int j, int k, int z, double* out) const {
    if (f_.family == MsmSpec::Family::TrialSpecific) {
      f_.build(j, k, z, out);
      return;
    }
    const double zd = static_cast<double>(z);
    out[0] = 1.0;
    out[1] = zd;
    double* p = out + 2;
    const double* t1 =
        f1_vals_.data() + static_cast<std::size_t>(k) * f1_cols_;
    for (int c = 0; c < f1_cols_; ++c) p[c] = t1[c] * zd;
    p += f1_cols_;
    const double* t2 =
        f2_vals_.data() + static_cast<std::size_t>(j + k) * f2_cols_;
    for (int c = 0; c < f2_cols_; ++c) p[c] = t2[c];
    p += f2_cols_;
    if (f_.family == MsmSpec::Family::CalAndTsv) {
      const double* t3 =
          f3_vals_.data() + static_cast<std::size_t>(j + k) * f3_cols_;
      for (int c = 0; c < f3_cols_; ++c) p[c] = t3[c] * zd;
    }
  }

 private:
  const Cohort& cohort_;
  ProtocolConfig protocol_;
  PropensitySpec g_;
  CensoringSpec h_;
  MsmSpec f_;
  int g_dim_, h_dim_, f_dim_;
  int trial_cols_, hcal_cols_, f1_cols_, f2_cols_, f3_cols_;
  std::vector<double> trial_vals_, hcal_vals_, f1_vals_, f2_vals_, f3_vals_;
};

}  // namespace nte
