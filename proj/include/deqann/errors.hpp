#pragma once

#include <stdexcept>
#include <string>

namespace deqann {

// Base class for everything thrown by this library on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes are incompatible with the requested operation.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// A linear system has no usable pivot.
struct SingularMatrixError : Error {
    explicit SingularMatrixError(const std::string& msg) : Error(msg) {}
};

// Malformed text input (xyz files, CSV, config files).
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// A key or symbol is not present in a table.
struct LookupError : Error {
    explicit LookupError(const std::string& msg) : Error(msg) {}
};

// A binary container does not match the expected layout.
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Invalid or unknown configuration entry.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace deqann
