#pragma once

#include <stdexcept>
#include <string>

namespace polex {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input document. `field` is a JSON-pointer-like path when the
// document parsed but did not match the schema; `line` is set for syntax
// errors (0 when unknown).
class SchemaError : public Error {
 public:
  SchemaError(std::string field, std::size_t line, const std::string& what)
      : Error(what), field_(std::move(field)), line_(line) {}
  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

// Well-formed input that violates a model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation's precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Iterative solver hit its cap, or a learner produced non-finite values.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class ExplanationUnavailable : public Error {
 public:
  using Error::Error;
};

class InvalidFoil : public Error {
 public:
  using Error::Error;
};

class NoFoilState : public Error {
 public:
  using Error::Error;
};

}  // namespace polex
