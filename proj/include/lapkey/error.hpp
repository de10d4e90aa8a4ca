#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace lapkey {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A Laplacian was requested from a chain that is not symmetric.
class ReversibilityError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed to converge, or produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the admissible domain (k out of range, lambda_k <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A checked inequality (e.g. a bound dominance chain) did not hold.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Input document failed to parse or validate.
class FormatError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::ostream*& warning_sink() {
  static std::ostream* sink = &std::clog;
  return sink;
}

}  // namespace detail

/// Redirect library warnings (symmetrization, non-canonical cuts). Pass nullptr to silence.
inline void set_warning_stream(std::ostream* os) { detail::warning_sink() = os; }

inline void warn(const std::string& msg) {
  if (auto* os = detail::warning_sink()) *os << "lapkey: warning: " << msg << '\n';
}

}  // namespace lapkey
