#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mulform {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression source. Line and column are 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line, int column)
      : Error(message + " at line " + std::to_string(line) + ", column " +
              std::to_string(column)),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Evaluation outside the domain of an elementary function (log, sqrt, division).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A flow left its coordinate box before reaching the requested time.
class DomainExit : public Error {
 public:
  DomainExit(double exit_time, std::vector<double> point)
      : Error("trajectory left the domain box at t=" + std::to_string(exit_time)),
        exit_time_(exit_time),
        point_(std::move(point)) {}

  double exit_time() const { return exit_time_; }
  const std::vector<double>& point() const { return point_; }

 private:
  double exit_time_;
  std::vector<double> point_;
};

/// Fixed-step integration could not reach the requested tolerance.
class StepUnderflow : public Error {
 public:
  using Error::Error;
};

/// A 2-form (or stacked linear system) that had to be inverted is singular.
class DegeneracyError : public Error {
 public:
  DegeneracyError(const std::string& what, double smallest_singular_value)
      : Error(what + " (smallest singular value " + std::to_string(smallest_singular_value) + ")"),
        sigma_min_(smallest_singular_value) {}

  double smallest_singular_value() const { return sigma_min_; }

 private:
  double sigma_min_;
};

/// Shape or dimension mismatch between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a structural precondition; `check()` names the failing check.
class PreconditionError : public Error {
 public:
  PreconditionError(std::string check, const std::string& message, double residual)
      : Error(check + ": " + message + " (residual " + std::to_string(residual) + ")"),
        check_(std::move(check)),
        residual_(residual) {}

  const std::string& check() const { return check_; }
  double residual() const { return residual_; }

 private:
  std::string check_;
  double residual_;
};

/// Invalid problem configuration (schema violation, unknown key, bad value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mulform
