#pragma once

#include <stdexcept>
#include <string>

namespace snsim {

// Raised when an optical pump is driven at or past the oscillation threshold.
struct threshold_error : std::domain_error {
    explicit threshold_error(const std::string& msg) : std::domain_error(msg) {}
};

// Raised when an input file or config document cannot be accepted as-is.
struct input_error : std::runtime_error {
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace snsim
