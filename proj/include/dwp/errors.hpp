#pragma once

#include <stdexcept>
#include <string>

namespace dwp {

/// File / stream level failure (truncated file, bad magic, short read).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unsupported or corrupted format version in a container header.
struct VersionError : IoError {
    explicit VersionError(const std::string& msg) : IoError(msg) {}
};

/// Bad configuration: unknown keys, missing prerequisites, invalid specs.
/// CLI maps this (and usage errors) to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dwp
