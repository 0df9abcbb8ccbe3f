#pragma once

#include <stdexcept>
#include <string>

namespace tap {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto stable exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace tap
