#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kamred {

// Raised when a divisor |omega.l +- k| (or a Melnikov divisor) falls below
// the admissible floor. Carries the offending mode so drivers can report
// which resonance rejected the frequency.
class SmallDivisorError : public std::runtime_error {
public:
    SmallDivisorError(std::string what, std::vector<int> ell, long long i, long long j,
                      double divisor, double threshold)
        : std::runtime_error(std::move(what)),
          ell(std::move(ell)), i(i), j(j), divisor(divisor), threshold(threshold) {}

    std::vector<int> ell;      // time-Fourier mode
    long long i = 0, j = 0;    // spatial / block indices involved
    double divisor = 0.0;
    double threshold = 0.0;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InvalidInputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Conjugation generator too large for the series machinery; the caller
// should shrink epsilon (or the step) and retry.
class StepSizeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Structural assumption on the model violated (e.g. Hamiltonian sample
// without the expected symmetry).
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace kamred
