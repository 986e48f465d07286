#pragma once

#include <stdexcept>
#include <string>

namespace pinet {

// Errors caused by bad input (arguments, files, configs). The CLI maps these
// to exit code 1; anything else that escapes is a runtime failure (exit 2).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidQuaternion : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InvalidArgument : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, int line)
      : ValidationError(line > 0 ? "line " + std::to_string(line) + ": " + what
                                 : what),
        line_(line) {}
  /// Same error with a location prefix such as a file name.
  ParseError(const std::string& prefix, const ParseError& inner)
      : ValidationError(prefix + ": " + inner.what()), line_(inner.line_) {}
  int line() const { return line_; }

 private:
  int line_;
};

class EmptyMesh : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class BehindCamera : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyMask : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Dataset manifest validation failures; message names the offending record.
class DatasetError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SamplerExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pinet
