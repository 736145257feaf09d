#pragma once

#include <stdexcept>
#include <string>

namespace fairrep {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Width or shape mismatch between an input and what a component was built for.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed, missing or degenerate input data (CSV, schema, dataset contents).
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or argument value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during training (non-finite loss and the like).
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace fairrep
