#pragma once

#include <stdexcept>
#include <string>

namespace mlc {

// Base for all library errors. `kind()` is a stable machine-readable tag
// (the CLI echoes it in its JSON error output).
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

// Shape disagreement between tensors; message names the primitive and both shapes.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape_error", message) {}
};

// Index or label outside its valid range.
class IndexError : public Error {
public:
    explicit IndexError(const std::string& message) : Error("index_error", message) {}
};

// Invalid configuration value or combination.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config_error", message) {}
};

// Dataset construction / batching violations.
class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error("data_error", message) {}
};

// CSV / file parsing failure; message carries the line number where known.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& message) : Error("parse_error", message) {}
};

// Filesystem failure; message carries the path.
class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io_error", message) {}
};

// Non-finite loss or exploding values during training or checking.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& message) : Error("divergence_error", message) {}
};

// API called in a state that forbids it (e.g. meta update mid-window).
class StateError : public Error {
public:
    explicit StateError(const std::string& message) : Error("state_error", message) {}
};

} // namespace mlc
