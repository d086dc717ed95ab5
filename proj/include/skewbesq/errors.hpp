#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skewbesq {

/// Invalid model, curve or simulation input. Never clamped silently.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain of an operation (time outside the curve
/// domain, empty interval, unsupported special-function argument).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// A computation produced a non-finite value or failed to converge.
class NumericalFailure : public std::runtime_error {
public:
  explicit NumericalFailure(const std::string& what,
                            std::size_t step = npos)
      : std::runtime_error(what), step_(step) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

/// Malformed command line or config file.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace skewbesq
