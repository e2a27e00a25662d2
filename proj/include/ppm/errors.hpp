#pragma once

#include <stdexcept>

namespace ppm {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad inputs: violated preconditions, malformed files, incompatible grids.
/// The CLI maps these to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or OS-level failure. The CLI maps these to exit code 1.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ppm
