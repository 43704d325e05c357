#pragma once

#include <stdexcept>
#include <string>

namespace sofuse {

// Error taxonomy. Each family maps to one CLI exit code (see cli.hpp).
enum class ErrorKind { Config, Data, NonTermination, Contract };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class InfeasibleError : public ConfigError {
 public:
  explicit InfeasibleError(const std::string& what) : ConfigError(what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

// Shape disagreement between operands or between data and config.
class DimensionError : public DataError {
 public:
  explicit DimensionError(const std::string& what) : DataError(what) {}
};

class EmptySequenceError : public DimensionError {
 public:
  explicit EmptySequenceError(const std::string& what) : DimensionError(what) {}
};

// Class index / category id out of range.
class LabelError : public DataError {
 public:
  explicit LabelError(const std::string& what) : DataError(what) {}
};

class ParseError : public DataError {
 public:
  explicit ParseError(const std::string& what) : DataError(what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorKind::Contract, what) {}
};

// No active prunable weight left to select.
class ExhaustedError : public ContractError {
 public:
  explicit ExhaustedError(const std::string& what) : ContractError(what) {}
};

class DoublePruneError : public ContractError {
 public:
  explicit DoublePruneError(const std::string& what) : ContractError(what) {}
};

class NonTerminationError : public Error {
 public:
  explicit NonTerminationError(const std::string& what) : Error(ErrorKind::NonTermination, what) {}
};

}  // namespace sofuse
