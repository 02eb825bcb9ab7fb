#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace kfcal {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Bad or inconsistent user-supplied configuration (files, CLI, dimensions of
// config-level objects). Maps to exit code 2 in the CLI.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Structural inconsistency in a system model or belief fed to the filter.
class ModelError : public std::runtime_error {
public:
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid parameterization usage (theta dimension, coordinate index).
class ParamError : public std::runtime_error {
public:
    explicit ParamError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime numerical failure (non-SPD innovation covariance, non-finite
// quantities). Maps to exit code 3 in the CLI.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Problem too large for the dense reference oracle.
class OracleScaleError : public std::runtime_error {
public:
    explicit OracleScaleError(const std::string& what) : std::runtime_error(what) {}
};

// Violation of an internal invariant (a bug, not a user error).
class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

// Relative weights applied to the primary and supervisory loss terms when
// forming the optimization objective. (1,1) is the plain joint likelihood;
// (1,0) drops supervision from the objective entirely.
struct LossWeights {
    double w_o = 1.0;
    double w_s = 1.0;
};

}  // namespace kfcal
