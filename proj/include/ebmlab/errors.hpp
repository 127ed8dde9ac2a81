#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ebmlab {

/// Base of every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid sizes, hyperparameters or config keys.
struct ConfigError : Error {
    using Error::Error;
};

/// Array dimensions that do not match the model or each other.
struct ShapeError : Error {
    using Error::Error;
};

/// Non-finite values where finite ones are required.
struct NumericalError : Error {
    using Error::Error;
};

/// Malformed files. `line` is 1-based, 0 when unknown.
struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
    std::size_t line;
};

namespace detail {

inline void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

inline void require_config(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

} // namespace detail
} // namespace ebmlab
