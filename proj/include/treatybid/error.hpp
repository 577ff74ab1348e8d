#pragma once

#include <stdexcept>
#include <string>

namespace treatybid {

/// Invalid configuration or parameters, detected before a run starts.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was called outside its precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values surfaced during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A statistic is undefined for the given data (e.g. zero dispersion).
class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed or incompatible checkpoint / data file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace treatybid
