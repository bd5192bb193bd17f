#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace licds {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Invalid configuration or arguments (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure such as a diverging rollout (CLI exit code 3).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what, long last_finite = -1)
        : std::runtime_error(what), last_finite_index(last_finite) {}
    /// Index of the last finite sample before a blow-up, -1 if not applicable.
    long last_finite_index;
};

/// Filesystem / serialization failure (CLI exit code 4).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vector& v) {
    return v.allFinite();
}

} // namespace licds
