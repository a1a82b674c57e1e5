#pragma once

#include <stdexcept>
#include <string>

namespace lns {

/// Error categories surfaced by every module. The CLI maps these to exit codes.
enum class ErrorCode {
    ShapeMismatch,
    InvalidArgument,
    ConfigError,
    IoError,
    NumericError,
    CflViolation,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

inline void check(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) throw Error(code, msg);
}

} // namespace lns
