#include "tagemb/error.hpp"

#include <fmt/format.h>

namespace tagemb {

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : DataError(fmt::format("{}:{}: {}", source, line, what)), line_(line) {}

DurationError::DurationError(double required_seconds, double actual_seconds)
    : DataError(fmt::format("clip too short: requires {:.3f} s, got {:.3f} s", required_seconds,
                            actual_seconds)),
      required_(required_seconds),
      actual_(actual_seconds) {}

ConvergenceError::ConvergenceError(int iterations, double residual)
    : NumericalError(fmt::format("SVD did not converge after {} iterations (residual {:.3e})",
                                 iterations, residual)),
      iterations_(iterations),
      residual_(residual) {}

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage:
      return 1;
    case ErrorKind::data:
      return 2;
    case ErrorKind::numerical:
      return 3;
    case ErrorKind::state:
      return 1;
  }
  return 1;
}

}  // namespace tagemb
