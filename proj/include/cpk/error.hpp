#pragma once

#include <stdexcept>
#include <string>

namespace cpk {

// Every failure the library reports derives from Error. The CLI maps the
// concrete type onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown column, malformed kernel spec, invalid bounds.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Syntax error in a kernel spec, with a 1-based line/column.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, int line, int column)
      : ConfigError(what + " at line " + std::to_string(line) + ", column " +
                    std::to_string(column)),
        line_(line),
        column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed or degenerate data (non-finite entries, zero-variance targets).
class DataError : public Error {
 public:
  using Error::Error;
};

// A parameter value outside the mathematical domain of a kernel (e.g. an
// SDOF damping ratio >= 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Cholesky failure after jitter escalation; carries the last jitter tried.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, double jitter = 0.0)
      : Error(what), jitter_(jitter) {}
  double jitter() const noexcept { return jitter_; }

 private:
  double jitter_;
};

class OptimizationError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpk
