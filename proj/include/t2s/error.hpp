// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace t2s {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or violated precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that cannot be combined.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed magic, header or record in a file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Payload shorter than the header declares.
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Header declares a size that does not fit in memory or in the index type.
class DimensionOverflowError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value reached an optimizer or a loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Two configuration sources disagree.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace t2s
