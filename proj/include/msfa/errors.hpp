#pragma once

#include <stdexcept>
#include <string>

namespace msfa {

// Bad user input: malformed files, shape mismatches, out-of-range values.
// The CLI maps this to exit code 1.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures (missing file, unwritable path, truncated payload).
// Also exit code 1.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures: singular systems with ridge = 0, non-finite results.
// The CLI maps this to exit code 2.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace msfa
