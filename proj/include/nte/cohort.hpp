#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nte/common.hpp"

namespace nte {

// One cohort member. Weeks are integer calendar weeks from study start
// (week 0 = first enrollment week). t_star is the event-or-censoring week
// (tau+1 when neither occurred); v1..v3 are dose-receipt weeks (kNever when
// the dose was never received).
struct ParticipantRecord {
  std::string id;
  int t_star = 0;
  int delta = 0;   // 1 = event at t_star, 0 = censored
  int s = 0;       // first eligible trial
  int s_star = 0;  // last eligible trial
  int v1 = kNever;
  int v2 = kNever;
  int v3 = kNever;
  std::vector<double> x;  // covariates, cohort-wide fixed ordering
};

struct ProtocolConfig {
  int num_trials = 0;    // trials j = 0 .. num_trials-1
  int tau = 0;           // administrative censoring week
  int dose2_window = 6;  // max weeks from dose 1 to dose 2 under the regimen
  std::string week0_label;

  int J() const { return num_trials - 1; }
  int K(int j) const { return tau - j; }  // follow-up weeks for trial j
  void validate() const;
};

struct Cohort {
  std::vector<ParticipantRecord> persons;
  std::vector<std::string> covariate_names;

  int covariate_index(const std::string& name) const;
};

// Regimen-initiation indicator Z_j = I(v1 <= j+1). Requires s <= j <= s_star.
int uptake_indicator(const ParticipantRecord& rec, int j);

// Remaining-uncensored indicator R_j(k); R_j(0) = 1 for eligible records.
// Requires s <= j <= s_star and 0 <= k <= K_j.
int censor_indicator(const ParticipantRecord& rec, int j, int k,
                     const ProtocolConfig& protocol);

// Observed-event indicator Y_j(k) = I(t_star <= j+k, delta = 1).
// Requires s <= j <= s_star and 0 <= k <= K_j.
int event_indicator(const ParticipantRecord& rec, int j, int k,
                    const ProtocolConfig& protocol);

// Person-trial-week panel in struct-of-spans form. Every materialized row is
// at risk (rows stop after the first r = 0 or y = 1); within a trial rows are
// k = 0, 1, ... in order, and a person's trials are contiguous ascending.
struct Panel {
  struct TrialSpan {
    std::int32_t person = 0;
    std::int32_t row_begin = 0;
    std::int32_t row_end = 0;  // exclusive
    std::int16_t j = 0;
    std::int8_t z = 0;
  };
  struct Row {
    std::int16_t k = 0;
    std::int8_t r = 1;
    std::int8_t y = 0;
  };

  std::vector<TrialSpan> trials;
  std::vector<Row> rows;
  std::vector<double> weight;              // parallel to rows; 1 until computed
  std::vector<std::int32_t> person_trial_begin;  // size persons+1, into trials
  const Cohort* cohort = nullptr;
  ProtocolConfig protocol;

  std::size_t n_persons() const { return person_trial_begin.size() - 1; }
};

// Expands every person into their eligible trial records. Trials stop at the
// first trial entered with z = 1 (later trials have prior uptake).
Panel expand_trials(const Cohort& cohort, const ProtocolConfig& protocol);

// Maps standard field names (id, t_star, delta, s, s_star, v1, v2, v3) to
// header names when the file uses different ones. Unmapped header columns
// become covariates in header order.
using ColumnMap = std::map<std::string, std::string>;

Cohort load_cohort(std::istream& in, const ProtocolConfig& protocol,
                   const ColumnMap& schema = {});
Cohort load_cohort_file(const std::string& path, const ProtocolConfig& protocol,
                        const ColumnMap& schema = {});

void write_panel(std::ostream& out, const Panel& panel);

}  // namespace nte
