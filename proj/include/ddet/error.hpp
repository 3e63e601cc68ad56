#pragma once

#include <stdexcept>
#include <string>

namespace ddet {

// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension mismatches. Messages name the offending axis.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad configuration: unknown keys, unparsable values, invalid settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem and data problems (missing files, undecodable images, ...).
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized data (checkpoints, PNG streams).
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddet
