#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace driftnet {

// Bad input data or configuration (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed flow CSV row. Carries the 1-based line number when known.
class ParseError : public DataError {
 public:
  ParseError(const std::string& message, std::size_t line = 0)
      : DataError(line ? "line " + std::to_string(line) + ": " + message : message),
        message_(message),
        line_(line) {}
  std::size_t line() const { return line_; }
  const std::string& message() const { return message_; }

 private:
  std::string message_;
  std::size_t line_;
};

// Model or manifest file that cannot be decoded.
class FormatError : public DataError {
 public:
  enum class Kind { kVersionMismatch, kTruncated, kChecksum, kMalformed };
  FormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// A contract violation inside the library (CLI exit code 3).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace driftnet
