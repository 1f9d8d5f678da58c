#pragma once

#include <stdexcept>
#include <string>

namespace pzsl {

/// Base of every error thrown by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or inner-dimension mismatch between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced or consumed, zero-norm rows, diverged loss.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Out-of-range hyperparameter or argument.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent file on disk.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Dataset content violates its contract (unknown label, empty candidate set, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// A runtime invariant check failed during training.
class InvariantError : public Error {
public:
    using Error::Error;
};

} // namespace pzsl
