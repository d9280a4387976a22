#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nte/sim.hpp"

namespace nte {

inline constexpr const char* kVersion = "0.1.0";

// Flat key-value run configuration. [section] headers prefix keys as
// "section.key"; lookups accept either the full key or the bare name when it
// is unambiguous. Values set later (file order, then flag overrides) win.
struct Config {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const;
  // Resolved value or fallback; records the effective pair into `effective`
  // so the manifest can echo every default that was consulted.
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const;
  bool get_flag(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);

  // Every key consulted via get*, with the value actually used. Mutable
  // bookkeeping so reads stay const.
  mutable std::map<std::string, std::string> effective;
};

Config parse_config(std::istream& in);
Config load_config_file(const std::string& path);

// "j=0,3,6,9;k=1..34" -> cells of the cross product with k <= K_j.
std::vector<GridCell> parse_grid(const std::string& text,
                                 const ProtocolConfig& protocol);

// Orchestrators behind the CLI subcommands. Each writes its artifacts under
// out_dir and returns a process exit status; failures print the stage that
// raised and the diagnostic to stderr.
int cmd_simulate(const Config& config, const std::string& out_dir);
int cmd_analyze(const Config& config, const std::string& out_dir);
int cmd_replicate(const Config& config, const std::string& out_dir);
int cmd_oracle_check(const Config& config, const std::string& out_dir);

}  // namespace nte
