#pragma once

#include <stdexcept>
#include <string>

namespace luxmix {

// Error taxonomy mapped onto CLI exit codes:
//   usage/config      -> 1  (caller invoked something wrong)
//   data errors       -> 2  (inputs are malformed, inconsistent or degenerate)
//   numerical faults  -> 3  (NaN/Inf tripwire, solver did not converge)

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : Error {
  using Error::Error;
};
struct ConfigError : UsageError {
  using UsageError::UsageError;
};

struct DataError : Error {
  using Error::Error;
};
struct DimensionError : DataError {
  using DataError::DataError;
};
struct RangeError : DataError {
  using DataError::DataError;
};
struct FormatError : DataError {
  using DataError::DataError;
};
struct DegenerateError : DataError {
  using DataError::DataError;
};

struct NumericError : Error {
  using Error::Error;
};
struct SolverError : NumericError {
  using NumericError::NumericError;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  if (dynamic_cast<const UsageError*>(&e)) return 1;
  return 1;
}

}  // namespace luxmix
