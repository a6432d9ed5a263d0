#pragma once

#include <stdexcept>
#include <string>

namespace damo {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension/layout violations: mismatched shapes, degenerate dims, wrong channel counts.
struct ShapeError : Error {
    using Error::Error;
};

// Numeric-domain violations: nonpositive depth under a mask, nonpositive median, log of <= 0.
struct DomainError : Error {
    using Error::Error;
};

// API misuse: stale cache, iter > max_iter, unknown op name.
struct UsageError : Error {
    using Error::Error;
};

// Structurally valid input that leaves nothing to compute (empty mask, all-zero weights).
struct DegenerateInputError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// A probed function returned NaN/Inf during finite differencing.
struct EvalError : Error {
    using Error::Error;
};

}  // namespace damo
