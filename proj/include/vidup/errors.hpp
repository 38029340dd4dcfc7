#pragma once

#include <stdexcept>
#include <string>

namespace vidup {

// Exit codes used by the command-line tool for each error family.
enum class ExitCode : int { Ok = 0, Usage = 1, Config = 2, MissingArtifact = 3, Numerical = 4 };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const { return ExitCode::Usage; }
};

// Invalid configuration values, dimensions, or malformed persisted metadata.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::Config; }
};

// Tensor shapes that do not fit the receiving operation.
class ShapeError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::Config; }
};

class MissingArtifactError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::MissingArtifact; }
};

// A loss or parameter became non-finite.
class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::Numerical; }
};

}  // namespace vidup
