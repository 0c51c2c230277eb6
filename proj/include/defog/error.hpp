#pragma once

#include <stdexcept>
#include <string>

namespace defog {

// Contract violation or internal failure. CLI maps this to exit code 2.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Problem with user-supplied input (missing file, bad flag value, unreadable
// directory). CLI maps this to exit code 1.
struct UserError : Error {
    explicit UserError(const std::string& msg) : Error(msg) {}
};

} // namespace defog
