#pragma once

#include <stdexcept>
#include <string>

namespace tripletforge {

// Exit-code classes used by the CLI: 2 config, 3 I/O, 4 numeric failure.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Store-level failures, each a distinct kind so callers can tell a corrupt
// file from a format mismatch.
struct ChecksumError : IoError {
    explicit ChecksumError(const std::string& msg) : IoError(msg) {}
};

struct TruncationError : IoError {
    explicit TruncationError(const std::string& msg) : IoError(msg) {}
};

struct UnknownMagicError : IoError {
    explicit UnknownMagicError(const std::string& msg) : IoError(msg) {}
};

struct UnknownVersionError : IoError {
    explicit UnknownVersionError(const std::string& msg) : IoError(msg) {}
};

} // namespace tripletforge
