#pragma once

#include <stdexcept>
#include <string>

namespace milasc {

// Configuration or input validation problem. The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf or divergence during numerics. The CLI maps these to exit code 2.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace milasc
