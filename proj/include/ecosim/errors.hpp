#pragma once

#include <stdexcept>
#include <string>

namespace ecosim {

/// Malformed input file (syntax, header, unreadable path).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value parsed fine but violates a field constraint.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Sizes of inputs that must agree do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss or parameter.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ecosim
