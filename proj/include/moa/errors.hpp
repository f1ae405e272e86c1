#pragma once

#include <stdexcept>
#include <string>

namespace moa {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or record.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Well-formed input violating a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Caller violated an operation precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Network-level failure (connection refused, timeout, offline guard).
class TransportError : public Error {
public:
    using Error::Error;
};

/// A live call attempted while the process runs offline. Never retried.
class OfflineViolation : public TransportError {
public:
    using TransportError::TransportError;
};

}  // namespace moa
