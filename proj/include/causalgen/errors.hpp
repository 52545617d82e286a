#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace causalgen {

// Bad inputs: malformed configs, schema violations, broken invariants.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when every enumerated causal function has zero likelihood on the
// data a category (or the whole dataset) must explain.
class NoConsistentFunctionError : public std::runtime_error {
public:
  explicit NoConsistentFunctionError(const std::string& what,
                                     std::vector<int> members = {})
      : std::runtime_error(what), offending_members(std::move(members)) {}

  // Observation indices of the category that admits no function.
  std::vector<int> offending_members;
};

// Enumeration would exceed the configured expression-count bound.
class EnumerationOverflowError : public std::runtime_error {
public:
  explicit EnumerationOverflowError(const std::string& what)
      : std::runtime_error(what) {}
};

// Grid search ran out of its evaluation budget before covering all cells.
class BudgetExhaustedError : public std::runtime_error {
public:
  explicit BudgetExhaustedError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace causalgen
