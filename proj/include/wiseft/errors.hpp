#pragma once

#include <stdexcept>
#include <string>

namespace wiseft {

// Layout or dimension mismatch between structured values.
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// Argument outside its documented domain.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or truncated file content.
struct CodecError : std::runtime_error {
    explicit CodecError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset content violates a precondition (missing class, empty split, ...).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required, or a diverging run.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation invoked on an object in the wrong state.
struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid experiment configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wiseft
