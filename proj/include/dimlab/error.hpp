#pragma once

#include <stdexcept>
#include <string>

namespace dimlab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or dataset shapes.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Out-of-range hyperparameter or argument value.
class ParameterError : public Error {
public:
  using Error::Error;
};

/// NaN/Inf encountered in a loss or gradient.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Caller violated an API precondition (e.g. backward from a non-scalar).
class ContractError : public Error {
public:
  using Error::Error;
};

class PermutationError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

/// A required column is missing from a tabular input.
class SchemaError : public DataError {
public:
  using DataError::DataError;
};

/// A feature cannot be fitted against predictions: fewer than two rows or
/// zero variance within the batch.
class DegenerateFeature : public Error {
public:
  using Error::Error;
};

}  // namespace dimlab
