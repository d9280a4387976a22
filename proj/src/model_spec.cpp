#include "nte/model_spec.hpp"

#include <cstdio>

namespace nte {

TermBuilder TermBuilder::poly(int degree) {
  if (degree < 1) throw ConfigError("poly term: degree must be >= 1");
  TermBuilder t;
  t.kind = Kind::Poly;
  t.degree = degree;
  return t;
}

TermBuilder TermBuilder::rcs(SplineSpec spec) {
  if (spec.knots.size() < 3) throw ConfigError("rcs term: need >= 3 knots");
  TermBuilder t;
  t.kind = Kind::Rcs;
  t.spline = std::move(spec);
  return t;
}

TermBuilder TermBuilder::parse(const std::string& text) {
  if (text == "none") return none();
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  int arg = 0;
  if (colon != std::string::npos) {
    try {
      arg = std::stoi(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad term spec: " + text);
    }
  }
  if (head == "poly") return poly(colon == std::string::npos ? 2 : arg);
  if (head == "rcs") {
    TermBuilder t;
    t.kind = Kind::Rcs;
    t.requested_knots = colon == std::string::npos ? 4 : arg;
    if (t.requested_knots < 3) throw ConfigError("rcs term: need >= 3 knots");
    return t;
  }
  throw ConfigError("bad term spec: " + text + " (want none|poly:d|rcs:m)");
}

int TermBuilder::cols() const {
  switch (kind) {
    case Kind::None:
      return 0;
    case Kind::Poly:
      return degree;
    case Kind::Rcs:
      return spline.knots.empty() ? requested_knots - 1 : spline.basis_cols();
  }
  return 0;
}

void TermBuilder::eval(double t, double* out) const {
  switch (kind) {
    case Kind::None:
      return;
    case Kind::Poly: {
      double v = 1.0;
      for (int d = 0; d < degree; ++d) {
        v *= t;
        out[d] = v;
      }
      return;
    }
    case Kind::Rcs:
      if (spline.knots.empty()) {
        throw ConfigError("rcs term evaluated before knots were placed");
      }
      rcs_basis(t, spline, out);
      return;
  }
}

std::string TermBuilder::describe() const {
  switch (kind) {
    case Kind::None:
      return "none";
    case Kind::Poly:
      return "poly:" + std::to_string(degree);
    case Kind::Rcs:
      return spline.knots.empty()
                 ? "rcs:" + std::to_string(requested_knots)
                 : spline.describe();
  }
  return "none";
}

void PropensitySpec::build(int j, const double* x, double* out) const {
  out[0] = 1.0;
  trial_term.eval(static_cast<double>(j), out + 1);
  double* p = out + 1 + trial_term.cols();
  for (int c : cov_idx) *p++ = x[c];
}

std::vector<std::string> PropensitySpec::column_names(
    const Cohort& cohort) const {
  std::vector<std::string> names{"(intercept)"};
  for (int c = 0; c < trial_term.cols(); ++c) {
    names.push_back("trial." + std::to_string(c + 1));
  }
  for (int c : cov_idx) {
    names.push_back(cohort.covariate_names[static_cast<std::size_t>(c)]);
  }
  return names;
}

void CensoringSpec::build(int j, int k, int z, const double* x,
                          double* out) const {
  out[0] = 1.0;
  calendar_term.eval(static_cast<double>(j + k), out + 1);
  double* p = out + 1 + calendar_term.cols();
  if (include_z) *p++ = static_cast<double>(z);
  for (int c : cov_idx) *p++ = x[c];
}

std::vector<std::string> CensoringSpec::column_names(
    const Cohort& cohort) const {
  std::vector<std::string> names{"(intercept)"};
  for (int c = 0; c < calendar_term.cols(); ++c) {
    names.push_back("calendar." + std::to_string(c + 1));
  }
  if (include_z) names.push_back("z");
  for (int c : cov_idx) {
    names.push_back(cohort.covariate_names[static_cast<std::size_t>(c)]);
  }
  return names;
}

void MsmSpec::validate() const {
  if (family == Family::TrialSpecific && num_trials < 1) {
    throw ConfigError("trial-specific MSM needs num_trials");
  }
  if (family == Family::TrialSpecific && f3.kind != TermBuilder::Kind::None) {
    throw ConfigError("trial-specific MSM does not use f3");
  }
}

int MsmSpec::dim() const {
  switch (family) {
    case Family::CalAndTsv:
      return 2 + f1.cols() + f2.cols() + f3.cols();
    case Family::TsvOnly:
      return 2 + f1.cols() + f2.cols();
    case Family::TrialSpecific:
      return 1 + num_trials * (1 + f1.cols()) + f2.cols();
  }
  return 0;
}

void MsmSpec::build(int j, int k, int z, double* out) const {
  const double zd = static_cast<double>(z);
  const double l = static_cast<double>(j + k);
  switch (family) {
    case Family::CalAndTsv:
    case Family::TsvOnly: {
      out[0] = 1.0;
      out[1] = zd;
      double* p = out + 2;
      f1.eval(static_cast<double>(k), p);
      for (int c = 0; c < f1.cols(); ++c) p[c] *= zd;
      p += f1.cols();
      f2.eval(l, p);
      p += f2.cols();
      if (family == Family::CalAndTsv) {
        f3.eval(l, p);
        for (int c = 0; c < f3.cols(); ++c) p[c] *= zd;
      }
      return;
    }
    case Family::TrialSpecific: {
      const int nf1 = f1.cols();
      out[0] = 1.0;
      double* p = out + 1;
      for (int t = 0; t < num_trials; ++t) p[t] = (t == j) ? zd : 0.0;
      p += num_trials;
      for (int t = 0; t < num_trials * nf1; ++t) p[t] = 0.0;
      if (z != 0 && j < num_trials) {
        f1.eval(static_cast<double>(k), p + j * nf1);
      }
      p += num_trials * nf1;
      f2.eval(l, p);
      return;
    }
  }
}

std::vector<std::string> MsmSpec::column_names() const {
  std::vector<std::string> names{"(intercept)"};
  auto block = [&](const std::string& stem, int cols) {
    for (int c = 0; c < cols; ++c) {
      names.push_back(stem + "." + std::to_string(c + 1));
    }
  };
  switch (family) {
    case Family::CalAndTsv:
    case Family::TsvOnly:
      names.push_back("z");
      block("f1(k):z", f1.cols());
      block("f2(j+k)", f2.cols());
      if (family == Family::CalAndTsv) block("f3(j+k):z", f3.cols());
      break;
    case Family::TrialSpecific:
      for (int t = 0; t < num_trials; ++t) {
        names.push_back("z:trial" + std::to_string(t));
      }
      for (int t = 0; t < num_trials; ++t) {
        block("f1(k):z:trial" + std::to_string(t), f1.cols());
      }
      block("f2(j+k)", f2.cols());
      break;
  }
  return names;
}

std::string MsmSpec::family_name() const {
  switch (family) {
    case Family::CalAndTsv:
      return "eq3";
    case Family::TrialSpecific:
      return "eq4";
    case Family::TsvOnly:
      return "eq5";
  }
  return "?";
}

std::vector<double> build_design(int j, int k, int z, const MsmSpec& spec,
                                 const ProtocolConfig& protocol) {
  if (j < 0 || j > protocol.J() || k < 0 || k > protocol.K(j)) {
    throw DomainError("build_design: (j=" + std::to_string(j) +
                      ", k=" + std::to_string(k) + ") outside the grid");
  }
  if (z != 0 && z != 1) throw DomainError("build_design: z must be 0/1");
  std::vector<double> out(static_cast<std::size_t>(spec.dim()));
  spec.build(j, k, z, out.data());
  return out;
}

void place_panel_knots(const Panel& panel, PropensitySpec& g, CensoringSpec& h,
                       MsmSpec& f) {
  auto place = [](TermBuilder& term, const std::vector<double>& values) {
    if (!term.needs_knots()) return;
    if (term.requested_knots != 4)
      throw ConfigError(
          "only 4-knot splines have default percentile placements");
    term.spline = place_knots(values);
  };

  if (g.trial_term.needs_knots()) {
    std::vector<double> trial;
    trial.reserve(panel.trials.size());
    for (const auto& span : panel.trials)
      trial.push_back(static_cast<double>(span.j));
    place(g.trial_term, trial);
  }
  if (h.fits_model() && h.calendar_term.needs_knots()) {
    std::vector<double> cal;
    for (const auto& span : panel.trials) {
      if (!h.applies_to_arm(span.z)) continue;
      for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri)
        cal.push_back(static_cast<double>(span.j + panel.rows[ri].k));
    }
    place(h.calendar_term, cal);
  }
  if (f.f1.needs_knots() || f.f2.needs_knots() || f.f3.needs_knots()) {
    std::vector<double> tsv, cal;
    for (const auto& span : panel.trials)
      for (auto ri = span.row_begin + 1; ri < span.row_end; ++ri) {
        if (panel.rows[ri].r != 1) continue;
        tsv.push_back(static_cast<double>(panel.rows[ri].k));
        cal.push_back(static_cast<double>(span.j + panel.rows[ri].k));
      }
    place(f.f1, tsv);
    place(f.f2, cal);
    if (f.family == MsmSpec::Family::CalAndTsv) place(f.f3, cal);
  }
}

}  // namespace nte
