#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hasqa {

// Root of every error raised by the library; the CLI maps these to a
// nonzero exit status with a one-line structured message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Bad user-supplied data (empty corpus, duplicate ids, empty split).
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error("input", what) {}
};

// Malformed dataset or config text; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("parse", "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Malformed binary file or payload; carries the byte offset of the fault.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : Error("format", "offset " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// API misuse: shape mismatch, all-masked input, stale cache.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& what) : Error("index", what) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what) : Error("capacity", what) {}
};

}  // namespace hasqa
