#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mwcnp {

// Raised when a tensor, vector or record has the wrong size. Carries both
// sizes so callers can report them without parsing the message.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& what_arg, std::size_t expected, std::size_t actual)
      : std::invalid_argument(what_arg + ": expected " + std::to_string(expected) + ", got " +
                              std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

// A loss or intermediate quantity came out NaN/Inf. `stage` names where
// ("inner-grad", "outer-grad", "cnp-train step 12", ...).
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string stage, double value)
      : std::runtime_error("non-finite value " + std::to_string(value) + " at " + stage),
        stage_(std::move(stage)),
        value_(value) {}

  const std::string& stage() const noexcept { return stage_; }
  double value() const noexcept { return value_; }

 private:
  std::string stage_;
  double value_;
};

}  // namespace mwcnp
