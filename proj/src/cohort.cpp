#include "nte/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace nte {

void ProtocolConfig::validate() const {
  if (num_trials < 1) throw ConfigError("protocol: num_trials must be >= 1");
  if (tau < num_trials) {
    throw ConfigError("protocol: tau must be >= num_trials (every trial "
                      "needs at least one follow-up week)");
  }
  if (dose2_window < 1) throw ConfigError("protocol: dose2_window must be >= 1");
}

int Cohort::covariate_index(const std::string& name) const {
  for (std::size_t i = 0; i < covariate_names.size(); ++i) {
    if (covariate_names[i] == name) return static_cast<int>(i);
  }
  throw ConfigError("unknown covariate: " + name);
}

namespace {

void require_window(const ParticipantRecord& rec, int j) {
  if (j < rec.s || j > rec.s_star) {
    throw DomainError("person " + rec.id + " is not eligible for trial " +
                      std::to_string(j));
  }
}

}  // namespace

int uptake_indicator(const ParticipantRecord& rec, int j) {
  require_window(rec, j);
  return rec.v1 <= j + 1 ? 1 : 0;
}

int censor_indicator(const ParticipantRecord& rec, int j, int k,
                     const ProtocolConfig& protocol) {
  require_window(rec, j);
  if (k < 0 || k > protocol.K(j)) {
    throw DomainError("R_" + std::to_string(j) + "(" + std::to_string(k) +
                      ") undefined: k outside 0..K_j for person " + rec.id);
  }
  if (k == 0) return 1;
  const int z = rec.v1 <= j + 1 ? 1 : 0;
  int censored = 0;
  if (z == 0 && rec.v1 <= j + k + 1) censored = 1;  // comparator initiated
  if (z == 1) {
    // Non-adherence: no second dose within the window, or a booster dose.
    if (k >= protocol.dose2_window &&
        (is_never(rec.v2) || rec.v2 - rec.v1 > protocol.dose2_window)) {
      censored = 1;
    }
    if (rec.v3 <= j + k) censored = 1;
  }
  if (rec.t_star <= j + k && rec.delta == 0) censored = 1;  // lost to follow-up
  return 1 - censored;
}

int event_indicator(const ParticipantRecord& rec, int j, int k,
                    const ProtocolConfig& protocol) {
  require_window(rec, j);
  if (k < 0 || k > protocol.K(j)) {
    throw DomainError("Y_" + std::to_string(j) + "(" + std::to_string(k) +
                      ") undefined: k outside 0..K_j for person " + rec.id);
  }
  return (rec.t_star <= j + k && rec.delta == 1) ? 1 : 0;
}

Panel expand_trials(const Cohort& cohort, const ProtocolConfig& protocol) {
  protocol.validate();
  Panel panel;
  panel.cohort = &cohort;
  panel.protocol = protocol;
  panel.person_trial_begin.reserve(cohort.persons.size() + 1);
  panel.person_trial_begin.push_back(0);

  for (std::size_t pi = 0; pi < cohort.persons.size(); ++pi) {
    const ParticipantRecord& rec = cohort.persons[pi];
    const int last = std::min(rec.s_star, protocol.J());
    for (int j = rec.s; j <= last; ++j) {
      if (rec.v1 <= j) break;  // prior uptake: ineligible for this and later
      const int z = uptake_indicator(rec, j);
      Panel::TrialSpan span;
      span.person = static_cast<std::int32_t>(pi);
      span.j = static_cast<std::int16_t>(j);
      span.z = static_cast<std::int8_t>(z);
      span.row_begin = static_cast<std::int32_t>(panel.rows.size());
      const int K = protocol.K(j);
      for (int k = 0; k <= K; ++k) {
        Panel::Row row;
        row.k = static_cast<std::int16_t>(k);
        row.r = static_cast<std::int8_t>(censor_indicator(rec, j, k, protocol));
        row.y = static_cast<std::int8_t>(event_indicator(rec, j, k, protocol));
        if (k == 0 && (row.r != 1 || row.y != 0)) {
          throw ValidationError("person " + rec.id + " trial " +
                                std::to_string(j) +
                                ": enrollment week not event-free at risk");
        }
        panel.rows.push_back(row);
        if (row.r == 0 || row.y == 1) break;  // absorbing
      }
      span.row_end = static_cast<std::int32_t>(panel.rows.size());
      panel.trials.push_back(span);
      if (z == 1) break;  // later trials would have prior uptake
    }
    panel.person_trial_begin.push_back(
        static_cast<std::int32_t>(panel.trials.size()));
  }
  panel.weight.assign(panel.rows.size(), 1.0);
  return panel;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int parse_int_cell(const std::string& cell, const std::string& what,
                   std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad integer for " +
                     what + ": '" + cell + "'");
  }
}

// Dose weeks: empty cell, "inf" or "Inf" mean never received.
int parse_week_cell(const std::string& cell, const std::string& what,
                    std::size_t line_no) {
  const std::string t = trim(cell);
  if (t.empty() || t == "inf" || t == "Inf" || t == "INF") return kNever;
  return parse_int_cell(t, what, line_no);
}

double parse_double_cell(const std::string& cell, const std::string& what,
                         std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number for " +
                     what + ": '" + cell + "'");
  }
}

void validate_record(const ParticipantRecord& rec, const ProtocolConfig& proto,
                     std::size_t line_no) {
  auto fail = [&](const std::string& msg) {
    throw ValidationError("line " + std::to_string(line_no) + " (id " +
                          rec.id + "): " + msg);
  };
  if (rec.delta != 0 && rec.delta != 1) fail("delta must be 0 or 1");
  if (rec.s < 0 || rec.s > rec.s_star) fail("need 0 <= s <= s_star");
  if (rec.s_star > proto.J()) fail("s_star beyond the last trial");
  if (rec.t_star < 1 || rec.t_star > proto.tau + 1) {
    fail("t_star outside 1..tau+1");
  }
  if (rec.t_star <= rec.s_star) {
    fail("t_star <= s_star: person not event-free and under follow-up "
         "through the last eligible trial");
  }
  if (rec.v1 <= rec.s) fail("v1 <= s: prior uptake contradicts eligibility");
  if (!is_never(rec.v1) && rec.v1 < 1) fail("v1 must be >= 1");
  if (is_never(rec.v1) && !is_never(rec.v2)) fail("v2 finite but v1 never");
  if (is_never(rec.v2) && !is_never(rec.v3)) fail("v3 finite but v2 never");
  if (!is_never(rec.v2) && rec.v2 <= rec.v1) fail("need v1 < v2");
  if (!is_never(rec.v3) && rec.v3 <= rec.v2) fail("need v2 < v3");
}

}  // namespace

Cohort load_cohort(std::istream& in, const ProtocolConfig& protocol,
                   const ColumnMap& schema) {
  protocol.validate();
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty cohort file");
  const auto header = split_csv_line(line);

  auto mapped = [&](const std::string& field) {
    auto it = schema.find(field);
    return it == schema.end() ? field : it->second;
  };
  std::map<std::string, int> col_of;
  for (std::size_t c = 0; c < header.size(); ++c) {
    col_of[trim(header[c])] = static_cast<int>(c);
  }
  const char* fields[] = {"id", "t_star", "delta", "s", "s_star",
                          "v1", "v2",     "v3"};
  std::map<std::string, int> idx;
  for (const char* f : fields) {
    auto it = col_of.find(mapped(f));
    if (it == col_of.end()) {
      throw ParseError(std::string("cohort header missing column '") +
                       mapped(f) + "'");
    }
    idx[f] = it->second;
  }

  Cohort cohort;
  std::vector<int> cov_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    bool standard = false;
    for (const char* f : fields) {
      if (static_cast<int>(c) == idx[f]) standard = true;
    }
    if (!standard) {
      cov_cols.push_back(static_cast<int>(c));
      cohort.covariate_names.push_back(trim(header[c]));
    }
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }
    ParticipantRecord rec;
    rec.id = trim(cells[static_cast<std::size_t>(idx["id"])]);
    if (rec.id.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty id");
    }
    rec.t_star = parse_int_cell(trim(cells[static_cast<std::size_t>(idx["t_star"])]),
                                "t_star", line_no);
    rec.delta = parse_int_cell(trim(cells[static_cast<std::size_t>(idx["delta"])]),
                               "delta", line_no);
    rec.s = parse_int_cell(trim(cells[static_cast<std::size_t>(idx["s"])]), "s",
                           line_no);
    rec.s_star = parse_int_cell(trim(cells[static_cast<std::size_t>(idx["s_star"])]),
                                "s_star", line_no);
    rec.v1 = parse_week_cell(cells[static_cast<std::size_t>(idx["v1"])], "v1",
                             line_no);
    rec.v2 = parse_week_cell(cells[static_cast<std::size_t>(idx["v2"])], "v2",
                             line_no);
    rec.v3 = parse_week_cell(cells[static_cast<std::size_t>(idx["v3"])], "v3",
                             line_no);
    rec.x.reserve(cov_cols.size());
    for (std::size_t ci = 0; ci < cov_cols.size(); ++ci) {
      rec.x.push_back(parse_double_cell(
          trim(cells[static_cast<std::size_t>(cov_cols[ci])]),
          cohort.covariate_names[ci], line_no));
    }
    validate_record(rec, protocol, line_no);
    cohort.persons.push_back(std::move(rec));
  }
  if (cohort.persons.empty()) throw ValidationError("cohort has no rows");
  return cohort;
}

Cohort load_cohort_file(const std::string& path, const ProtocolConfig& protocol,
                        const ColumnMap& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cohort file: " + path);
  return load_cohort(in, protocol, schema);
}

void write_panel(std::ostream& out, const Panel& panel) {
  out << "id,j,k,z,r,y,at_risk,weight\n";
  char buf[64];
  for (const auto& span : panel.trials) {
    const auto& id =
        panel.cohort->persons[static_cast<std::size_t>(span.person)].id;
    for (std::int32_t ri = span.row_begin; ri < span.row_end; ++ri) {
      const auto& row = panel.rows[static_cast<std::size_t>(ri)];
      std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%d,1,%.10g",
                    static_cast<int>(span.j), static_cast<int>(row.k),
                    static_cast<int>(span.z), static_cast<int>(row.r),
                    static_cast<int>(row.y),
                    panel.weight[static_cast<std::size_t>(ri)]);
      out << id << ',' << buf << '\n';
    }
  }
}

}  // namespace nte
