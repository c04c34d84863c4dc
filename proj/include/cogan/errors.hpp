#pragma once

#include <stdexcept>
#include <string>

namespace cogan {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 2, IoError -> 3, NumericError -> 4.
// UsageError marks API misuse (e.g. backward without a forward cache).

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : std::logic_error {
    explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace cogan
