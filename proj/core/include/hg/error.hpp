#pragma once

#include <stdexcept>
#include <string>

namespace hg {

/// Dimension or channel mismatch between operands.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A value violates an operation's precondition (negative weight, eps <= 0, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated file contents, unreadable paths.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A non-finite value showed up where the numerics require finite ones.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hg
