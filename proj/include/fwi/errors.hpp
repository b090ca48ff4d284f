#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fwi {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A constructor or precondition rejected its input (NaN, bad spacing, out-of-grid positions, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated or unreadable binary/text file.
class IoError : public Error {
public:
    using Error::Error;
};

/// Time step violates the stability limit of the explicit scheme.
class StabilityError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (quantile level, ray parameter, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Parameter choice that makes a computation overflow or degenerate.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or a failed linear solve in the middle of a computation.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Iterative solver stopped without meeting its tolerance.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : NumericalError(what), history_(std::move(history)) {}

    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// Experiment configuration could not be parsed or validated.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

}  // namespace fwi
