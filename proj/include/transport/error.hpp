#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace transport {

// Exit codes used by the command-line front end.
enum class ExitCode : int { success = 0, config = 2, data = 3, numerical = 4 };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept = 0;
  virtual const char* category() const noexcept = 0;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::config; }
  const char* category() const noexcept override { return "config"; }
};

// Bad argument passed to a library operation (out-of-range parameter).
class ArgumentError : public ConfigError {
 public:
  using ConfigError::ConfigError;
  const char* category() const noexcept override { return "argument"; }
};

class SchemaError : public ConfigError {
 public:
  using ConfigError::ConfigError;
  const char* category() const noexcept override { return "schema"; }
};

// Sample splitting violated (e.g. Gram matrix trained on estimation records).
class ProtocolError : public ConfigError {
 public:
  using ConfigError::ConfigError;
  const char* category() const noexcept override { return "protocol"; }
};

class UnsupportedConfiguration : public ConfigError {
 public:
  using ConfigError::ConfigError;
  const char* category() const noexcept override { return "unsupported"; }
};

class DataError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::data; }
  const char* category() const noexcept override { return "data"; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::numerical; }
  const char* category() const noexcept override { return "numerical"; }
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate)
      : NumericalError(what), last_iterate_(std::move(last_iterate)) {}
  const char* category() const noexcept override { return "convergence"; }
  const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }

 private:
  std::vector<double> last_iterate_;
};

}  // namespace transport
