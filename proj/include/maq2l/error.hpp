#pragma once

#include <stdexcept>
#include <string>

namespace maq2l {

// Every failure raised by the library derives from Error. The CLI maps the
// concrete type onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on a consumed graph, shape drift between EMA and
// parameters, and similar contract violations.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed text input. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that references unknown entities (e.g. class codes).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Out-of-range index into a table or tensor axis.
class IndexError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace maq2l
