#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dinf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required CSV column is missing or a schema is malformed.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A CSV cell could not be parsed. `row()` is the 1-based data row.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// An argument lies outside the domain an operation accepts.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A dataset is too small for the requested operation.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Newton training stopped before reaching the gradient tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double grad_norm)
      : Error(what), grad_norm_(grad_norm) {}
  double grad_norm() const noexcept { return grad_norm_; }

 private:
  double grad_norm_;
};

/// Cholesky factorization of the Hessian failed.
class NotPositiveDefiniteError : public Error {
 public:
  using Error::Error;
};

/// A disparity metric has no value on the given data (e.g. gFPR without
/// negatives).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration (CLI flags or config file).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dinf
