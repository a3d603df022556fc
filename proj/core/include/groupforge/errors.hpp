#pragma once

#include <stdexcept>
#include <string>

namespace groupforge {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DatasetError : std::runtime_error {
    explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite gradients or loss intermediates; feeds collapse handling.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace groupforge
