#pragma once

#include <stdexcept>
#include <string>

namespace dfsp {

// Malformed input data or a violated dataset/space invariant.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite values, zero-norm rows, divergence.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dfsp
