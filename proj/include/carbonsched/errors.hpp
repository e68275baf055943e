#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace carbonsched {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a type invariant. `fields` names the offending inputs when known.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::string const& what, std::vector<std::string> fields = {})
      : Error(what), fields_(std::move(fields)) {}

  std::vector<std::string> const& fields() const noexcept { return fields_; }

 private:
  std::vector<std::string> fields_;
};

/// Malformed trace or fixture text. Line numbers are 1-based; 0 means "whole input".
class ParseError : public Error {
 public:
  ParseError(std::string const& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

/// The job cannot finish its work inside the window. `max_work` is the best achievable.
class InfeasibleError : public Error {
 public:
  InfeasibleError(std::string const& what, double max_work, double required)
      : Error(what), max_work_(max_work), required_(required) {}

  double max_work() const noexcept { return max_work_; }
  double required() const noexcept { return required_; }

 private:
  double max_work_;
  double required_;
};

/// The exhaustive oracle refuses instances above its enumeration budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

}  // namespace carbonsched
