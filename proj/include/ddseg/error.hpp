#pragma once

#include <stdexcept>
#include <string>

namespace ddseg {

// Incompatible tensor shapes or model dimensions.
class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data (files, label ids, empty sets).
class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf produced by a kernel or a training step.
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Invalid command-line or configuration values.
class UsageError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace ddseg
