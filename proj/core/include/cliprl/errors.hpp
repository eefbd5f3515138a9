#pragma once

#include <stdexcept>
#include <string>

namespace cliprl {

// Base of every error thrown by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, int epoch, int batch)
      : NumericError(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Value cannot be represented in the on-disk format (e.g. class id >= 256 in a mask).
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

// File exists but its content fails magic/checksum validation.
class IntegrityError : public IoError {
 public:
  using IoError::IoError;
};

class IncompatibleVersionError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace cliprl
