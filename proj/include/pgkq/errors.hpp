#pragma once

#include <stdexcept>
#include <string>

namespace pgkq {

/// Invalid user-supplied configuration or mismatched dimensions.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A documented precondition of an operation was broken by the caller.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// Non-finite values, failed factorizations and similar.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// An algorithm finished but its output does not satisfy its contract.
class AlgorithmError : public std::runtime_error {
 public:
  explicit AlgorithmError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pgkq
