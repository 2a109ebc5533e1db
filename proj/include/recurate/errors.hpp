#pragma once

#include <stdexcept>
#include <string>

namespace recurate {

// Invalid configuration (bad K, malformed config file, unknown option).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input data violates a documented invariant (names the offending subject/row).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (sampler divergence, non-convergent fit without fallback).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace recurate
