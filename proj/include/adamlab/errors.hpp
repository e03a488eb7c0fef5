#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace adamlab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A constructor or operation received a parameter outside its valid range.
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// The requested quantity does not exist for the given inputs (e.g. an
/// unreachable gap on a branch, a nonpositive metric in a log fit).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Missing or inconsistent configuration. `field()` names the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class UnsupportedDimension : public Error {
public:
    using Error::Error;
};

/// Non-finite arithmetic. `step()` is the iteration (or window index) at
/// which it happened, -1 when not applicable.
class NumericError : public Error {
public:
    NumericError(const std::string& what, std::int64_t step = -1)
        : Error(what), step_(step) {}

    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

/// Raised by the GDM regime probe when no lemma covers the parameters.
class CoverageGap : public Error {
public:
    using Error::Error;
};

/// Filesystem failure; the message carries the path.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace adamlab
