#pragma once

#include <stdexcept>
#include <string>

namespace flownet {

// Input data violates a documented contract (malformed log line, duplicate
// link, out-of-range parameter that came from data).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An iterative solver hit its iteration cap.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// Caller passed arguments outside an operation's domain.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace flownet
