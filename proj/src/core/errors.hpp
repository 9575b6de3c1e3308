#pragma once

#include <stdexcept>
#include <string>

namespace ab {

// Error categories map 1:1 onto the CLI exit codes / C API status codes.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PhaseError : std::runtime_error {
    explicit PhaseError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ab
