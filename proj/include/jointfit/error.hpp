#pragma once

#include <stdexcept>
#include <string>

namespace jointfit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CSV rows, orphan subjects, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid model or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Degenerate numeric domain (empty interval, constant shared component).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A log-density term evaluated to a non-finite value.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& term, const std::string& what)
      : Error(what), term_(term) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

/// Inner or outer optimization failed to converge.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double gradient_norm)
      : Error(what), gradient_norm_(gradient_norm) {}
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  double gradient_norm_;
};

}  // namespace jointfit
