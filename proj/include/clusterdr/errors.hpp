#pragma once

#include <stdexcept>
#include <string>

namespace clusterdr {

// Bad input: malformed data, invalid configuration, violated preconditions.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// The data were valid but an estimate could not be produced
// (single-class labels, no observed outcomes in a training fold, ...).
class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A post-condition the library itself guarantees did not hold.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace clusterdr
