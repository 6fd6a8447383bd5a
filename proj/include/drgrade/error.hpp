#pragma once

#include <stdexcept>
#include <string>

namespace drgrade {

/// Error kinds surfaced to the CLI as the `kind` field of the error record.
enum class ErrorKind {
    invalid_argument,
    shape_mismatch,
    numeric,
    io,
    parse,
    state,
};

inline const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::state: return "state";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

inline void require(bool condition, const std::string& message)
{
    if (!condition) fail(ErrorKind::invalid_argument, message);
}

} // namespace drgrade
