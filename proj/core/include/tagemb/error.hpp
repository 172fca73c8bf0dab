#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tagemb {

// Broad failure classes; the CLI maps each to an exit code.
enum class ErrorKind {
  usage,      // bad parameter or configuration
  data,       // malformed or insufficient input data
  numerical,  // convergence failures, degenerate vectors, training stalls
  state,      // API misuse (stale cache, unfitted model)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyCorpusError : public DataError {
 public:
  explicit EmptyCorpusError(const std::string& what) : DataError(what) {}
};

class LookupError : public DataError {
 public:
  explicit LookupError(const std::string& what) : DataError(what) {}
};

class FormatError : public DataError {
 public:
  explicit FormatError(const std::string& what) : DataError(what) {}
};

class DurationError : public DataError {
 public:
  DurationError(double required_seconds, double actual_seconds);
  double required_seconds() const noexcept { return required_; }
  double actual_seconds() const noexcept { return actual_; }

 private:
  double required_;
  double actual_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(int iterations, double residual);
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

class DegenerateError : public NumericalError {
 public:
  explicit DegenerateError(const std::string& what) : NumericalError(what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorKind::state, what) {}
};

// 0 success, 1 usage/config, 2 data, 3 numerical/convergence.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace tagemb
