#pragma once

#include <stdexcept>
#include <string>

namespace meshcomp {

/// Malformed input: bad files, mismatched topology, invalid indices.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or flag combinations supplied by a caller.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failed factorization, divergence or non-finite values.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace meshcomp
