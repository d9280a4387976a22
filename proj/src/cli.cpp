#include "nte/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

namespace nte {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

bool Config::has(const std::string& key) const {
  if (values.count(key)) return true;
  const std::string suffix = "." + key;
  for (const auto& [k, v] : values)
    if (k.size() > suffix.size() &&
        k.compare(k.size() - suffix.size(), suffix.size(), suffix) == 0)
      return true;
  return false;
}

std::string Config::get(const std::string& key,
                        const std::string& fallback) const {
  const std::string* found = nullptr;
  if (auto it = values.find(key); it != values.end()) {
    found = &it->second;
  } else {
    const std::string suffix = "." + key;
    for (const auto& [k, v] : values) {
      if (k.size() > suffix.size() &&
          k.compare(k.size() - suffix.size(), suffix.size(), suffix) == 0) {
        if (found && *found != v)
          throw ConfigError("config key '" + key +
                            "' is ambiguous across sections");
        found = &v;
      }
    }
  }
  const std::string out = found ? *found : fallback;
  effective[key] = out;
  return out;
}

int Config::get_int(const std::string& key, int fallback) const {
  const std::string s = get(key, std::to_string(fallback));
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad integer '" + s + "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", fallback);
  const std::string s = get(key, buf);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad number '" + s + "'");
  }
}

std::uint64_t Config::get_seed(const std::string& key,
                               std::uint64_t fallback) const {
  const std::string s = get(key, std::to_string(fallback));
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad seed '" + s + "'");
  }
}

bool Config::get_flag(const std::string& key, bool fallback) const {
  const std::string s = get(key, fallback ? "on" : "off");
  if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
  if (s == "off" || s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config key '" + key + "': expected on/off, got '" + s +
                    "'");
}

void Config::set(const std::string& key, const std::string& value) {
  values[key] = value;
}

Config parse_config(std::istream& in) {
  Config config;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::size_t hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ParseError("config line " + std::to_string(lineno) +
                         ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) +
                       ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ParseError("config line " + std::to_string(lineno) +
                       ": empty key");
    if (!section.empty()) key = section + "." + key;
    config.values[key] = value;
  }
  return config;
}

Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  return parse_config(in);
}

namespace {

std::vector<int> parse_int_list(const std::string& text,
                                const std::string& what) {
  std::vector<int> out;
  for (const std::string& raw : split(text, ',')) {
    const std::string item = trim(raw);
    if (item.empty()) throw ParseError(what + ": empty list item");
    const std::size_t dots = item.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stoi(item));
      } else {
        const int a = std::stoi(item.substr(0, dots));
        const int b = std::stoi(item.substr(dots + 2));
        if (b < a) throw ParseError(what + ": descending range " + item);
        for (int v = a; v <= b; ++v) out.push_back(v);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError(what + ": bad integer in '" + item + "'");
    }
  }
  return out;
}

}  // namespace

std::vector<GridCell> parse_grid(const std::string& text,
                                 const ProtocolConfig& protocol) {
  std::vector<int> js, ks;
  for (const std::string& raw : split(text, ';')) {
    const std::string part = trim(raw);
    if (part.empty()) continue;
    const std::size_t eq = part.find('=');
    if (eq == std::string::npos)
      throw ParseError("grid: expected j=... or k=... in '" + part + "'");
    const std::string name = trim(part.substr(0, eq));
    const std::vector<int> vals =
        parse_int_list(part.substr(eq + 1), "grid " + name);
    if (name == "j") {
      js = vals;
    } else if (name == "k") {
      ks = vals;
    } else {
      throw ParseError("grid: unknown axis '" + name + "'");
    }
  }
  if (js.empty() || ks.empty())
    throw ParseError("grid: needs both j and k lists");
  std::vector<GridCell> cells;
  for (int j : js) {
    if (j < 0 || j > protocol.J())
      throw DomainError("grid: trial " + std::to_string(j) +
                        " outside 0.." + std::to_string(protocol.J()));
    for (int k : ks) {
      if (k < 1) throw DomainError("grid: k must be >= 1");
      if (k <= protocol.K(j)) cells.push_back({j, k});
    }
  }
  if (cells.empty())
    throw DomainError("grid: no (j, k) cell satisfies k <= K_j");
  return cells;
}

// ---- manifest ------------------------------------------------------------

namespace {

namespace fs = std::filesystem;

std::string iso_now() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open output file: " + path.string());
  return out;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_knot_line(std::ostream& out, const std::string& label,
                     const TermBuilder& term) {
  out << label;
  if (term.kind == TermBuilder::Kind::Rcs) {
    for (double t : term.spline.knots) out << ' ' << fmt_g(t);
  } else {
    out << " none";
  }
  out << '\n';
}

void write_coef_block(std::ostream& out, const std::string& block,
                      const std::vector<std::string>& names,
                      const Eigen::VectorXd& coef) {
  for (int i = 0; i < coef.size(); ++i)
    out << block << ' ' << i << ' ' << names[static_cast<std::size_t>(i)]
        << ' ' << fmt_g(coef[i]) << '\n';
}

struct ManifestSections {
  std::string knots, coefficients, weights, artifacts;
};

void write_manifest(const fs::path& path, const std::string& command,
                    const Config& config, const ManifestSections& sections) {
  std::ofstream out = open_out(path);
  out << "# nte run manifest\n# generated " << iso_now() << "\n";
  out << "version " << kVersion << "\ncommand " << command << "\n\n";
  out << "[config]\n";
  for (const auto& [k, v] : config.effective)
    out << k << " = " << (v.empty() ? "(none)" : v) << '\n';
  auto section = [&](const char* name, const std::string& body) {
    if (body.empty()) return;
    out << "\n[" << name << "]\n" << body;
  };
  section("knots", sections.knots);
  section("coefficients", sections.coefficients);
  section("weights", sections.weights);
  section("artifacts", sections.artifacts);
}

SimConfig sim_config_from(const Config& config) {
  SimConfig sim;
  sim.scenario = parse_scenario(config.get_int("scenario", 1));
  sim.n = config.get_int("n", 20000);
  sim.tau = config.get_int("tau", 20);
  sim.num_trials = config.get_int("trials", 13);
  sim.seed = config.get_seed("seed", 1);
  return sim;
}

MsmSpec::Family family_from(const Config& config) {
  const std::string name = config.get("model_family", "eq3");
  if (name == "eq3") return MsmSpec::Family::CalAndTsv;
  if (name == "eq4") return MsmSpec::Family::TrialSpecific;
  if (name == "eq5") return MsmSpec::Family::TsvOnly;
  throw ConfigError("model_family must be eq3, eq4, or eq5, got '" + name +
                    "'");
}

std::optional<double> truncation_from(const Config& config) {
  if (!config.has("truncate_weights")) {
    config.effective["truncate_weights"] = "(none)";
    return std::nullopt;
  }
  const double p = config.get_double("truncate_weights", 0.0);
  if (p <= 0.0 || p >= 50.0)
    throw ConfigError("truncate_weights percentile must be in (0, 50)");
  return p;
}

int fail_stage(const std::string& stage, const std::exception& err) {
  std::fprintf(stderr, "error [stage %s]: %s\n", stage.c_str(), err.what());
  return 1;
}

}  // namespace

// ---- commands ------------------------------------------------------------

int cmd_simulate(const Config& config, const std::string& out_dir) {
  std::string stage = "config";
  try {
    const SimConfig sim = sim_config_from(config);
    fs::create_directories(out_dir);

    stage = "calibrate";
    const InterceptTable table = calibrate_intercepts(sim.scenario, sim.tau);

    stage = "simulate";
    const Cohort cohort = simulate_cohort(sim, table);

    stage = "write";
    const fs::path dir(out_dir);
    {
      std::ofstream out = open_out(dir / "cohort.csv");
      write_cohort(out, cohort);
    }
    ManifestSections sections;
    sections.artifacts = "cohort cohort.csv\n";
    write_manifest(dir / "manifest.txt", "simulate", config, sections);
    return 0;
  } catch (const std::exception& err) {
    return fail_stage(stage, err);
  }
}

int cmd_analyze(const Config& config, const std::string& out_dir) {
  std::string stage = "config";
  try {
    const std::string cohort_path = config.get("cohort", "");
    if (cohort_path.empty())
      throw ConfigError("analyze needs a cohort file (key 'cohort')");
    ProtocolConfig protocol;
    protocol.num_trials = config.get_int("trials", 13);
    protocol.tau = config.get_int("tau", 20);
    protocol.dose2_window = config.get_int("dose2_window", 6);
    protocol.validate();

    PropensitySpec g;
    CensoringSpec h;
    MsmSpec f;
    f.family = family_from(config);
    f.num_trials = protocol.num_trials;
    const std::string cens = config.get("censoring", "z0");
    if (cens == "z0") {
      h.arm = CensoringSpec::Arm::Z0Only;
    } else if (cens == "pooled") {
      h.arm = CensoringSpec::Arm::Pooled;
      h.include_z = config.get_flag("censoring_z", false);
    } else if (cens == "unit") {
      h.arm = CensoringSpec::Arm::Unit;
    } else {
      throw ConfigError("censoring must be z0, pooled, or unit");
    }
    const bool spline = config.get_flag("spline", false);
    if (spline) {
      g.trial_term = TermBuilder::parse("rcs:4");
      h.calendar_term = TermBuilder::parse("rcs:4");
      f.f1 = TermBuilder::parse("rcs:4");
      f.f2 = TermBuilder::parse("rcs:4");
      f.f3 = TermBuilder::parse("rcs:4");
    }
    if (f.family == MsmSpec::Family::TrialSpecific)
      f.f3 = TermBuilder::none();
    const std::optional<double> truncate = truncation_from(config);
    const double gamma = config.get_double("gamma", 0.05);
    if (gamma <= 0.0 || gamma >= 1.0)
      throw ConfigError("gamma must be in (0, 1)");
    std::string teh_mode = config.get("teh", "one-sided");
    if (f.family == MsmSpec::Family::TrialSpecific) teh_mode = "off";
    if (teh_mode != "one-sided" && teh_mode != "two-sided" &&
        teh_mode != "off")
      throw ConfigError("teh must be one-sided, two-sided, or off");
    const bool dump_panel = config.get_flag("dump_panel", false);
    const std::string grid_text = config.get("grid", "");

    stage = "load";
    const Cohort cohort = load_cohort_file(cohort_path, protocol);
    for (std::size_t c = 0; c < cohort.covariate_names.size(); ++c) {
      g.cov_idx.push_back(static_cast<int>(c));
      h.cov_idx.push_back(static_cast<int>(c));
    }

    stage = "expand";
    Panel panel = expand_trials(cohort, protocol);

    stage = "knots";
    if (spline) place_panel_knots(panel, g, h, f);
    const DesignContext ctx(cohort, protocol, g, h, f);

    stage = "propensity fit";
    NuisanceFits fits;
    fits.zeta = fit_propensity(panel, ctx);

    stage = "censoring fit";
    if (h.fits_model()) fits.kappa = fit_censoring(panel, ctx);

    stage = "weights";
    const WeightDiagnostics diag =
        compute_ip_weights(panel, ctx, fits, truncate);

    stage = "msm fit";
    const FitResult msm = fit_msm(panel, ctx);

    stage = "variance";
    const StackedModel model{&panel, &ctx, fits.truncation_bounds};
    std::vector<GridCell> grid = grid_text.empty()
                                     ? full_grid(protocol)
                                     : parse_grid(grid_text, protocol);
    const ThetaLayout layout = make_layout(ctx, grid, teh_mode != "off");
    const ThetaHat theta = stack_theta(model, fits, msm, layout);
    const SandwichOutput sandwich = sandwich_variance(model, theta);

    stage = "surface";
    VESurface surface = ve_surface(msm.coef, grid, f, protocol);
    ve_ci(surface, theta, sandwich, gamma);

    stage = "teh";
    std::optional<TehResult> teh;
    if (teh_mode != "off") teh = teh_test(model, theta, sandwich);

    stage = "write";
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    {
      std::ofstream out = open_out(dir / "ve_surface.csv");
      write_surface(out, surface);
    }
    ManifestSections sections;
    sections.artifacts = "surface ve_surface.csv\n";
    if (teh) {
      std::ofstream out = open_out(dir / "teh.txt");
      out << "k_max " << teh->k_max << '\n';
      for (std::size_t j = 0; j < teh->auc.size(); ++j)
        out << "auc " << j << ' ' << fmt_g(teh->auc[j]) << '\n';
      out << "beta0 " << fmt_g(teh->beta0) << '\n';
      out << "beta " << fmt_g(teh->beta) << '\n';
      out << "se " << fmt_g(teh->se) << '\n';
      out << "u " << fmt_g(teh->u) << '\n';
      out << "p_one_sided " << fmt_g(teh->p_one_sided) << '\n';
      out << "p_two_sided " << fmt_g(teh->p_two_sided) << '\n';
      out << "test " << teh_mode << "\np "
          << fmt_g(teh_mode == "two-sided" ? teh->p_two_sided
                                           : teh->p_one_sided)
          << '\n';
      sections.artifacts += "teh teh.txt\n";
    }
    if (dump_panel) {
      std::ofstream out = open_out(dir / "panel.csv");
      write_panel(out, panel);
      sections.artifacts += "panel panel.csv\n";
    }

    std::ostringstream knots;
    write_knot_line(knots, "propensity.trial", g.trial_term);
    write_knot_line(knots, "censoring.calendar", h.calendar_term);
    write_knot_line(knots, "msm.f1", f.f1);
    write_knot_line(knots, "msm.f2", f.f2);
    if (f.family == MsmSpec::Family::CalAndTsv)
      write_knot_line(knots, "msm.f3", f.f3);
    sections.knots = knots.str();

    std::ostringstream coefs;
    write_coef_block(coefs, "zeta", g.column_names(cohort), fits.zeta.coef);
    if (h.fits_model())
      write_coef_block(coefs, "kappa", h.column_names(cohort),
                       fits.kappa.coef);
    write_coef_block(coefs, "alpha", f.column_names(), msm.coef);
    for (std::size_t c = 0; c < grid.size(); ++c) {
      const auto& cell = surface.cells[c];
      coefs << "rho j" << cell.j << "_k" << cell.k << ' '
            << fmt_g(cell.log_rr) << ' ' << fmt_g(*cell.se_log_rr) << '\n';
    }
    sections.coefficients = coefs.str();

    std::ostringstream wdiag;
    for (const auto& ts : diag.per_trial) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "trial %d rows %ld mean %.6g max %.6g p99 %.6g\n", ts.j,
                    ts.n_at_risk_rows, ts.mean, ts.max, ts.p99);
      wdiag << buf;
    }
    if (diag.truncation_bounds) {
      wdiag << "truncation " << fmt_g(diag.truncation_bounds->first) << ' '
            << fmt_g(diag.truncation_bounds->second) << '\n';
    } else {
      wdiag << "truncation none\n";
    }
    sections.weights = wdiag.str();

    write_manifest(dir / "manifest.txt", "analyze", config, sections);
    return 0;
  } catch (const std::exception& err) {
    return fail_stage(stage, err);
  }
}

int cmd_replicate(const Config& config, const std::string& out_dir) {
  std::string stage = "config";
  try {
    ReplicationConfig rep;
    rep.sim = sim_config_from(config);
    rep.replications = config.get_int("reps", 500);
    rep.family = family_from(config);
    rep.basis = config.get_flag("spline", false) ? TimeBasis::Spline
                                                 : TimeBasis::Poly;
    rep.truncate_percentile = truncation_from(config);
    const std::string teh_s = config.get("teh", "on");
    if (teh_s == "two-sided")
      throw ConfigError(
          "replication TEH rejection tracking uses the one-sided test");
    rep.run_teh = !(teh_s == "off" || teh_s == "false" || teh_s == "0" ||
                    teh_s == "no");
    rep.gamma = config.get_double("gamma", 0.05);
    rep.progress = config.get_flag("progress", false);
    const std::string grid_text = config.get("grid", "");
    if (!grid_text.empty())
      rep.cells = parse_grid(grid_text, rep.sim.protocol());

    stage = "replicate";
    const ReplicationSummary summary = run_replications(rep);

    stage = "write";
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    {
      std::ofstream out = open_out(dir / "replicate_summary.txt");
      write_replication_summary(out, summary);
    }
    ManifestSections sections;
    sections.artifacts = "summary replicate_summary.txt\n";
    write_manifest(dir / "manifest.txt", "replicate", config, sections);
    if (summary.replications_used == 0) {
      std::fprintf(stderr, "error [stage replicate]: every replication failed\n");
      return 1;
    }
    return 0;
  } catch (const std::exception& err) {
    return fail_stage(stage, err);
  }
}

int cmd_oracle_check(const Config& config, const std::string& out_dir) {
  std::string stage = "config";
  try {
    const int instances = config.get_int("instances", 50);
    if (instances < 1) throw ConfigError("instances must be positive");
    const std::uint64_t seed = config.get_seed("seed", 1);
    const double tol = config.get_double("tol", 1e-10);

    stage = "oracle";
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    std::ofstream out = open_out(dir / "oracle_report.txt");
    out << "instances " << instances << "\nseed " << seed << "\ntol "
        << fmt_g(tol) << '\n';

    Rng rng(seed);
    bool all_pass = true;
    for (int i = 1; i <= instances; ++i) {
      const TinyInstance t = random_tiny_instance(rng);
      double gap_ipw = 0.0, gap_paths = 0.0;
      for (int j = 0; j < t.num_trials; ++j) {
        for (int k = 1; k <= t.tau - j; ++k) {
          const double g = tiny_ve_gformula(t, j, k);
          gap_ipw = std::max(gap_ipw, std::fabs(g - tiny_ve_ipw(t, j, k)));
          gap_paths =
              std::max(gap_paths, std::fabs(g - tiny_ve_paths(t, j, k)));
        }
      }
      const bool pass = gap_ipw <= tol && gap_paths <= tol;
      all_pass = all_pass && pass;
      char buf[120];
      std::snprintf(buf, sizeof(buf),
                    "instance %d gap_ipw %.3e gap_paths %.3e %s\n", i,
                    gap_ipw, gap_paths, pass ? "pass" : "FAIL");
      out << buf;
    }
    out << (all_pass ? "result pass\n" : "result FAIL\n");

    ManifestSections sections;
    sections.artifacts = "report oracle_report.txt\n";
    write_manifest(dir / "manifest.txt", "oracle-check", config, sections);
    if (!all_pass)
      std::fprintf(stderr,
                   "error [stage oracle]: identity gap above tolerance\n");
    return all_pass ? 0 : 1;
  } catch (const std::exception& err) {
    return fail_stage(stage, err);
  }
}

}  // namespace nte
