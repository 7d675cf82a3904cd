#pragma once

#include <stdexcept>
#include <string>

namespace menv {

// Broad failure classes. The C API and the CLI map these onto status codes.
enum class ErrorKind {
  kInvalidArgument,  // precondition / shape / usage violations
  kParse,            // malformed input files
  kDimension,        // wrong number of values in a record
  kRange,            // value outside its admissible range
  kDegenerate,       // zero-norm / zero-variance inputs
  kConfig,           // run configuration problems
  kNumeric,          // non-finite values, factorization failures
  kIo,               // filesystem failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::kInvalidArgument, what) {}
};

class ParseError : public Error {
 public:
  // line is 1-based; 0 means "not line oriented".
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(ErrorKind::kParse, line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DimensionError : public Error {
 public:
  DimensionError(const std::string& what, std::size_t line = 0)
      : Error(ErrorKind::kDimension, line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error(ErrorKind::kRange, what) {}
};

class DegenerateInput : public Error {
 public:
  explicit DegenerateInput(const std::string& what) : Error(ErrorKind::kDegenerate, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

}  // namespace menv
