#pragma once

#include <stdexcept>
#include <string>

namespace ssdd {

// Base class for all library failures. Subclasses map to distinct CLI exit
// codes, see tools/.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A call violated its contract (bad argument, out-of-range value).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Operand shapes are inconsistent.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Numerical failure: non-finite values, factorization breakdown, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid or infeasible configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Corrupt, truncated or otherwise unreadable container data.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssdd
