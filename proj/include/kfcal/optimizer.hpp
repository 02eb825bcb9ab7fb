#pragma once

#include <string>
#include <vector>

#include "kfcal/grad_forward.hpp"
#include "kfcal/grad_reverse.hpp"

namespace kfcal {

enum class GradMode { Forward, Reverse };

const char* to_string(GradMode mode);

struct CalibrationConfig {
    GradMode mode = GradMode::Reverse;
    int itermax = 20;
    double eta0 = 0.1;
    bool line_search = true;
    double grad_tol = 1e-8;
    LossWeights loss_weights;

    void validate() const;
};

struct CalibrationReport {
    Vec theta_hat;
    std::vector<double> loss_history;       // weighted objective at each iterate
    std::vector<double> grad_norm_history;
    std::vector<double> ell_o_history;
    std::vector<double> ell_s_history;
    std::vector<double> iter_seconds;
    std::vector<double> step_sizes;         // accepted eta per iteration
    int iterations = 0;
    bool converged = false;   // stopped on grad_tol
    bool aborted = false;     // non-finite loss or gradient
    std::string note;
};

// Gradient descent on the weighted objective with optional Armijo
// backtracking (factor 1/2, c = 1e-4) from eta0, guaranteeing a
// non-increasing loss history.
CalibrationReport calibrate(const SystemModel& model, const SupervisorySpec& spec,
                            const std::vector<Vec>& y_o, const CovParam& param,
                            const Vec& theta0, const CalibrationConfig& cfg);

// Runs a plain (non-augmented) Kalman filter with R(theta), Q(theta) over the
// test data and returns the RMSE of the posterior means against ground truth
// over the given state components: sqrt(mean_k ||xhat_k[idx] - truth_k[idx]||^2).
// truth has one entry per step k = 1..N.
double evaluate(const SystemModel& model_test, const Vec& theta_hat,
                const CovParam& param, const std::vector<Vec>& truth,
                const std::vector<Vec>& y_test, const std::vector<int>& err_indices);

}  // namespace kfcal
