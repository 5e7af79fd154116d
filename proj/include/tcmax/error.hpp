#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tcmax {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (bad shape, bad index, empty input).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A data object violates one of its invariants (e.g. a distribution whose mass
/// does not sum to one). The message names the violated invariant.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::size_t step, const std::string& unit = "step")
      : Error(what + " (at " + unit + " " + std::to_string(step) + ")"), step_(step) {}
  explicit NumericalError(const std::string& what) : Error(what), step_(0) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Malformed or unknown configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tcmax
