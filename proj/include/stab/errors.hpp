#pragma once

#include <stdexcept>
#include <string>

namespace stab {

/// Raised for malformed inputs: bad config values, mesh files, shapes.
class InvalidInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a numerical kernel fails: factorization breakdown,
/// eigensolver stagnation, non-dichotomic Hamiltonian, NaN in a run.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace stab
