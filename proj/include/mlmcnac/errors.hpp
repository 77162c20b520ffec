#pragma once

#include <stdexcept>
#include <string>

namespace mlmcnac {

/// Construction-time invariant violation (names the failed invariant).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (carries field / position context from the parser).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Chain is reducible, has no unique stationary distribution, or similar.
class ErgodicityError : public std::runtime_error {
public:
    explicit ErgodicityError(const std::string& what) : std::runtime_error(what) {}
};

/// Chain failed to reach the total-variation threshold within the step cap.
class NonMixingError : public std::runtime_error {
public:
    explicit NonMixingError(const std::string& what) : std::runtime_error(what) {}
};

/// Linear system too close to singular to solve reliably.
class SingularityError : public std::runtime_error {
public:
    SingularityError(const std::string& what, double smallest_singular_value)
        : std::runtime_error(what), smallest_singular_value(smallest_singular_value) {}
    double smallest_singular_value;
};

/// Iterate escaped the trust region; `step` is the offending iteration.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int step)
        : std::runtime_error(what), step(step) {}
    int step;
};

/// Missing or inconsistent configuration (names the offending field).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Unusable data passed to a post-processing routine.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mlmcnac
