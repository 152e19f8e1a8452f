#pragma once

#include <stdexcept>
#include <string>

namespace resnls {

// Base for everything the library throws. The CLI maps the subclasses
// onto distinct process exit codes.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration: bad spec fields, bad ranges, missing files named in a config.
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Problems with input data: malformed CSV rows, invariant violations, empty datasets.
class DataError : public Error {
  public:
    using Error::Error;
};

// Shape mismatches between tensors or between a model and a dataset.
class DimensionError : public Error {
  public:
    using Error::Error;
};

// An API precondition was violated (scalar loss, missing gradient, ...).
class ContractError : public Error {
  public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
  public:
    using Error::Error;
};

// Model file problems. The three load failure modes are distinct types
// so callers can tell them apart.
class SerializationError : public Error {
  public:
    using Error::Error;
};

class VersionError : public SerializationError {
  public:
    using SerializationError::SerializationError;
};

class TruncatedError : public SerializationError {
  public:
    using SerializationError::SerializationError;
};

class ChecksumError : public SerializationError {
  public:
    using SerializationError::SerializationError;
};

}  // namespace resnls
