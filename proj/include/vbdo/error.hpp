#pragma once

#include <stdexcept>
#include <string>

namespace vbdo {

/// Failure categories. The CLI maps them onto process exit codes.
enum class ErrorKind {
    Argument,    // bad arguments, dimension mismatches, invalid config
    Numeric,     // factorization failure, degenerate data, non-finite input
    Divergence,  // solver blow-up, non-finite training loss
    Io,          // file access failures
    Format,      // malformed, truncated or corrupted files
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& what) : Error(ErrorKind::Argument, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

struct DivergenceError : Error {
    explicit DivergenceError(const std::string& what) : Error(ErrorKind::Divergence, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ArgumentError(what);
}

}  // namespace vbdo
