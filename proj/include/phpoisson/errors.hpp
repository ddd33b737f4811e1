#pragma once

#include <stdexcept>
#include <string>

namespace phpoisson {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A representation, sample or argument violates its documented constraints.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// The matrix series behind a generalized (a,b,0) representation cannot be
/// shown to converge.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// A computation ran but did not produce a trustworthy result.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Two independent formulas for the same quantity disagree.
class ConsistencyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// An observation has probability zero under the current parameters.
class ImpossibleObservationError : public NumericalError {
public:
    ImpossibleObservationError(const std::string& what, unsigned long long value)
        : NumericalError(what), value_(value) {}
    unsigned long long value() const noexcept { return value_; }

private:
    unsigned long long value_;
};

/// Rejection sampling ran out of attempts.
class AcceptanceError : public NumericalError {
public:
    AcceptanceError(const std::string& what, double survival_probability)
        : NumericalError(what), survival_probability_(survival_probability) {}
    double survival_probability() const noexcept { return survival_probability_; }

private:
    double survival_probability_;
};

}  // namespace phpoisson
