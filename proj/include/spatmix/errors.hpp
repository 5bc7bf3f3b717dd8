#pragma once

#include <stdexcept>
#include <string>

namespace spatmix {

// Malformed input files.
class parse_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes that disagree between otherwise valid inputs (data vs graph, K vs previous fit, ...).
class dimension_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite objectives, zero-variance statistics, degenerate densities.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace spatmix
