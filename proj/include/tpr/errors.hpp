#pragma once

#include <stdexcept>
#include <string>

namespace tpr {

// Error hierarchy. The CLI maps ConfigError -> exit 2, DataError family ->
// exit 3, everything else -> exit 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

// Raised by unbind_role when the role matrix is not orthonormal.
class PreconditionError : public Error {
 public:
  PreconditionError(const std::string& what, double deviation)
      : Error(what), deviation_(deviation) {}
  double deviation() const noexcept { return deviation_; }

 private:
  double deviation_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public DataError {
 public:
  SchemaError(const std::string& what, std::size_t line)
      : DataError(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class LengthError : public DataError {
 public:
  using DataError::DataError;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long step, double loss)
      : Error(what), step_(step), loss_(loss) {}
  long step() const noexcept { return step_; }
  double loss() const noexcept { return loss_; }

 private:
  long step_;
  double loss_;
};

class TransferError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace tpr
