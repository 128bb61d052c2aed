#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace igb {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One or more configuration constraints are violated. `violations()` lists
/// every failed constraint, each prefixed with the offending field name.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  explicit ConfigError(const std::string& violation)
      : ConfigError(std::vector<std::string>{violation}) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// A normalizer hit zero variance with epsilon = 0.
class DegenerateVarianceError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, double loss);

  std::size_t step() const noexcept { return step_; }
  double loss() const noexcept { return loss_; }

 private:
  std::size_t step_;
  double loss_;
};

}  // namespace igb
