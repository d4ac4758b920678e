#pragma once

#include <stdexcept>
#include <string>

namespace mimicvol {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (z <= 0, |rho| >= 1, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Argument outside the validated numerical range of an implementation.
class RangeError : public Error {
public:
    using Error::Error;
};

/// A series or iterative scheme hit its term/iteration cap.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Kernel estimator had too little local sample mass.
class LowMassError : public Error {
public:
    using Error::Error;
};

/// Price surface has a degenerate (non-positive) density on too many nodes.
class DegenerateDensityError : public Error {
public:
    using Error::Error;
};

/// Requested closed-form branch does not exist for these inputs.
class UnsupportedBranchError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or input data.
class ValidationError : public Error {
public:
    ValidationError(std::string key, const std::string& what)
        : Error(what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

} // namespace mimicvol
