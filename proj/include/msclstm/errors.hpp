#pragma once

#include <stdexcept>
#include <string>

namespace msclstm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An API was called out of order, e.g. backward on a consumed cache.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside its documented domain (labels, fractions, lengths).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Invalid training or model configuration.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Column layout of an input file does not match the requested schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Input data is unusable (empty, single class, too few samples).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint cannot be applied to a dataset or model.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

/// A serialized artifact is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace msclstm
