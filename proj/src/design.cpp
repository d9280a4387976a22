#include "nte/design.hpp"

namespace nte {

namespace {

// Tabulates a term over integer arguments 0..max_t (row-major).
std::vector<double> tabulate(const TermBuilder& term, int max_t) {
  const int cols = term.cols();
  std::vector<double> vals(static_cast<std::size_t>(max_t + 1) *
                           static_cast<std::size_t>(cols));
  for (int t = 0; t <= max_t; ++t) {
    if (cols > 0) {
      term.eval(static_cast<double>(t),
                vals.data() + static_cast<std::size_t>(t) * cols);
    }
  }
  return vals;
}

}  // namespace

DesignContext::DesignContext(const Cohort& cohort,
                             const ProtocolConfig& protocol,
                             const PropensitySpec& g, const CensoringSpec& h,
                             const MsmSpec& f)
    : cohort_(cohort), protocol_(protocol), g_(g), h_(h), f_(f) {
  f_.validate();
  g_dim_ = g_.dim();
  h_dim_ = h_.dim();
  f_dim_ = f_.dim();
  trial_cols_ = g_.trial_term.cols();
  hcal_cols_ = h_.fits_model() ? h_.calendar_term.cols() : 0;
  f1_cols_ = f_.f1.cols();
  f2_cols_ = f_.f2.cols();
  f3_cols_ = f_.family == MsmSpec::Family::CalAndTsv ? f_.f3.cols() : 0;

  trial_vals_ = tabulate(g_.trial_term, protocol.J());
  if (h_.fits_model()) hcal_vals_ = tabulate(h_.calendar_term, protocol.tau);
  if (f_.family != MsmSpec::Family::TrialSpecific) {
    f1_vals_ = tabulate(f_.f1, protocol.tau);
    f2_vals_ = tabulate(f_.f2, protocol.tau);
    if (f_.family == MsmSpec::Family::CalAndTsv) {
      f3_vals_ = tabulate(f_.f3, protocol.tau);
    }
  }
}

}  // namespace nte
