#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace leafvit {

// Error taxonomy mirrored by the CLI exit codes:
//   UsageError -> 1, ParseError/DataError -> 2, ShapeError -> 3.

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed command line or configuration request.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

// Byte-level parse failure. Carries the offset (or line number) where
// parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : Error(msg + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Well-formed input that violates a data contract (missing files, empty
// classes, out-of-range labels, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Dimension or numeric-shape mismatch between values that must agree.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

}  // namespace leafvit
