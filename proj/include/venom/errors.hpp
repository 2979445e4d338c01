#pragma once

#include <stdexcept>
#include <string>

namespace venom {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape, range, arity).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or solver failure during a numeric routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text file. Messages name the byte offset where possible.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Bad run configuration: unknown key, missing model slot, invalid combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (unreadable input, unwritable output).
class IoError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace venom
