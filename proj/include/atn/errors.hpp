#pragma once

#include <stdexcept>
#include <string>

namespace atn {

/// Broad failure classes. The CLI maps them onto process exit codes.
enum class ErrorKind {
  Config,     // invalid configuration, arguments or schema
  Data,       // malformed or inconsistent input data, I/O
  Numerical,  // fit or optimisation failure
};

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

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class IoError : public DataError {
 public:
  IoError(const std::string& path, const std::string& what)
      : DataError(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// Raised when an airway ellipse does not fit inside the patch.
class RenderError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class MeasurementError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Exit codes used by the command line tool.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return 2;
    case ErrorKind::Data:
      return 3;
    case ErrorKind::Numerical:
      return 4;
  }
  return 1;
}

}  // namespace atn
