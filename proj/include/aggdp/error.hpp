#pragma once

#include <stdexcept>
#include <string>

namespace aggdp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad dimensions, non-distribution rows, infeasible policies, overlapping sets.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed: iteration cap hit, singular system, divergence.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what, double last_residual = 0.0)
        : Error(what), last_residual_(last_residual) {}

    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ValidationError(message);
}

} // namespace detail
} // namespace aggdp
