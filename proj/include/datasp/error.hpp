#pragma once

#include <stdexcept>
#include <string>

namespace datasp {

/// Bad input: shapes, ranges, nonpositive costs and the like.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A smooth argmin was asked for weights over a vector with no finite entry.
struct NoFiniteBranchError : std::domain_error {
  NoFiniteBranchError() : std::domain_error("no finite branch") {}
};

/// Non-finite loss or gradient during optimisation.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Brute-force enumeration refused because it would exceed its guard.
struct OracleRefusal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Path sampler hit an all-zero row after masking; the parent draw must be redone.
struct ResampleRequired : std::runtime_error {
  ResampleRequired() : std::runtime_error("masked shortcut row is empty") {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace datasp
