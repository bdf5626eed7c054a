#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ifes {

/// Root of every error thrown by the library. The CLI maps subclasses to
/// exit-code classes, so keep the hierarchy flat.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape disagreement between tensors or against a layer.
class DimensionError : public Error {
public:
    DimensionError(std::string axis, const std::string& what)
        : Error("dimension error on axis '" + axis + "': " + what), axis_(std::move(axis)) {}

    const std::string& axis() const noexcept { return axis_; }

private:
    std::string axis_;
};

/// Invalid numeric parameter (even window, non-positive variance, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. backward without a forward cache.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Bad network or run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or gradient during optimisation.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Metric preconditions violated (degenerate dimensions, size mismatch).
class MetricError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents; carries the byte offset where decoding failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// File-system failure; the message names the path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Infrared/visible pair whose geometry does not match.
class RegistrationError : public Error {
public:
    using Error::Error;
};

/// Checkpoint checksum or structure mismatch.
class IntegrityError : public Error {
public:
    using Error::Error;
};

}  // namespace ifes
