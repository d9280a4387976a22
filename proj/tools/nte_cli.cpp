#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "nte/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "nested-trial-emulation toolkit: simulate cohorts, estimate VE "
      "surfaces, run the replication study, check the identification "
      "identity"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::string seed, scenario, n, reps, instances;
  std::string grid, model, spline, truncate, teh, cohort;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "config file: key = value lines with [section] headers");
    cmd->add_option("--out-dir", out_dir, "output directory")
        ->capture_default_str();
    cmd->add_option("--seed", seed, "base RNG seed");
  };

  CLI::App* c_sim = app.add_subcommand("simulate", "generate a cohort file");
  add_common(c_sim);
  c_sim->add_option("--scenario", scenario, "scenario 1, 2, or 3");
  c_sim->add_option("-n,--n", n, "cohort size");

  CLI::App* c_an =
      app.add_subcommand("analyze", "estimate a VE surface from a cohort");
  add_common(c_an);
  c_an->add_option("cohort", cohort, "cohort csv file");
  c_an->add_option("--grid", grid,
                   "report cells, e.g. \"j=0,3,6,9;k=1..34\"");
  c_an->add_option("--model", model, "MSM family: eq3 | eq4 | eq5");
  c_an->add_option("--spline", spline, "rcs time terms: on | off");
  c_an->add_option("--truncate-weights", truncate,
                   "symmetric weight truncation percentile");
  c_an->add_option("--teh", teh,
                   "effect-homogeneity test: one-sided | two-sided | off");

  CLI::App* c_rep =
      app.add_subcommand("replicate", "run the Monte Carlo study");
  add_common(c_rep);
  c_rep->add_option("--scenario", scenario, "scenario 1, 2, or 3");
  c_rep->add_option("-n,--n", n, "cohort size per replication");
  c_rep->add_option("--reps", reps, "number of replications");
  c_rep->add_option("--grid", grid, "report cells (default: Table-1 ten)");
  c_rep->add_option("--model", model, "MSM family: eq3 | eq4 | eq5");
  c_rep->add_option("--spline", spline, "rcs time terms: on | off");
  c_rep->add_option("--truncate-weights", truncate,
                    "symmetric weight truncation percentile");
  c_rep->add_option("--teh", teh, "track TEH rejections: on | off");

  CLI::App* c_or = app.add_subcommand(
      "oracle-check", "g-formula vs exact-weight IPW identity check");
  add_common(c_or);
  c_or->add_option("--instances", instances, "number of random instances");

  CLI11_PARSE(app, argc, argv);

  try {
    nte::Config config;
    if (!config_path.empty()) config = nte::load_config_file(config_path);

    CLI::App* active = app.get_subcommands().front();
    auto set_if = [&](const std::string& flag, const std::string& key,
                      const std::string& value) {
      const CLI::Option* opt = active->get_option_no_throw(flag);
      if (opt && opt->count() > 0) config.set(key, value);
    };
    set_if("--seed", "seed", seed);
    set_if("--scenario", "scenario", scenario);
    set_if("--n", "n", n);
    set_if("--reps", "reps", reps);
    set_if("--instances", "instances", instances);
    set_if("--grid", "grid", grid);
    set_if("--model", "model_family", model);
    set_if("--spline", "spline", spline);
    set_if("--truncate-weights", "truncate_weights", truncate);
    set_if("--teh", "teh", teh);
    set_if("cohort", "cohort", cohort);

    if (active == c_sim) return nte::cmd_simulate(config, out_dir);
    if (active == c_an) return nte::cmd_analyze(config, out_dir);
    if (active == c_rep) return nte::cmd_replicate(config, out_dir);
    return nte::cmd_oracle_check(config, out_dir);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
}
