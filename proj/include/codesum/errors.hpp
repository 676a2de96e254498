#pragma once

#include <stdexcept>
#include <string>

namespace codesum {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class DimensionError : public Error {
  public:
    using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
  public:
    using Error::Error;
};

/// Invalid configuration value or missing configuration key.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// A softmax row had every entry masked out.
class DegenerateMaskError : public Error {
  public:
    using Error::Error;
};

/// NaN or Inf produced by a forward computation.
class NumericError : public Error {
  public:
    using Error::Error;
};

/// Sequence longer than a position table or otherwise out of length bounds.
class LengthError : public Error {
  public:
    using Error::Error;
};

/// Unreadable, corrupt or incompatible file.
class FormatError : public Error {
  public:
    using Error::Error;
};

} // namespace codesum
