#pragma once

#include <stdexcept>
#include <string>

namespace nss {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Wrong magic, unsupported version or rank, unknown enum tag.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Payload shorter or longer than the header promises.
class CorruptionError : public Error {
public:
    using Error::Error;
};

/// Value-level invariant violated (non-finite pixel, empty batch, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Caller broke an API contract (e.g. reused a stale forward cache).
class ContractError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf surfaced during optimization.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace nss
