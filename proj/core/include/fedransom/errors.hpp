#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedransom {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data: malformed files, invariant violations, unknown labels.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A record-level CSV problem; `line()` is 1-based.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Configuration text that cannot be interpreted.
class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

/// Violations of the federation protocol or the message transport.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedransom
