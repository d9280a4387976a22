#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace nte {

// Calendar-week sentinel for "never happened" (dose never received, etc.).
// Never used in arithmetic, only in comparisons against finite weeks.
inline constexpr int kNever = std::numeric_limits<int>::max();

inline bool is_never(int week) { return week == kNever; }

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input text (bad header, unparsable cell, ...).
struct ParseError : Error {
  using Error::Error;
};

// Structurally valid input that violates a data invariant.
struct ValidationError : Error {
  using Error::Error;
};

// Request outside the defined domain (ineligible trial, week out of range).
struct DomainError : Error {
  using Error::Error;
};

// Bad or inconsistent configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Rank-deficient design / non-invertible system.
struct SingularError : Error {
  using Error::Error;
};

// Separated or degenerate binary outcome; the MLE does not exist.
struct SeparationError : Error {
  using Error::Error;
};

// Estimated probability hit 0/1 where positivity is required.
struct PositivityError : Error {
  using Error::Error;
};

}  // namespace nte
