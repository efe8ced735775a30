#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rankft {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside an operation's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed input text. `line` is 1-based; 0 means "not tied to a line".
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that breaks a record invariant.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what, std::size_t line = 0)
      : Error((line ? "line " + std::to_string(line) + ": " : std::string{}) + field + ": " + what),
        field_(std::move(field)),
        message_(what),
        line_(line) {}
  const std::string& field() const noexcept { return field_; }
  const std::string& message() const noexcept { return message_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::string message_;
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rankft
