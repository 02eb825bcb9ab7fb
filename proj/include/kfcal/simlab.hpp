#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kfcal/model.hpp"
#include "kfcal/optimizer.hpp"
#include "kfcal/params.hpp"

namespace kfcal {

// Deterministic seed derivation for independent sub-streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Smooth two-tone acceleration profile per axis. The primary tone traces a
// tight loop whose period matches the default supervisory downsample rate, so
// the deterministic path revisits itself at every selected step and pair
// distances are governed by the accumulated process noise alone; the faint
// secondary tone is incommensurate and breaks exact repetition.
struct AccelProfile {
    Eigen::Vector3d amp1{0.2, 0.2, 0.04};
    Eigen::Vector3d freq1{1.25663706, 1.25663706, 1.25663706};
    Eigen::Vector3d phase1{0.0, 1.57079633, 0.7};
    Eigen::Vector3d amp2{0.01, 0.01, 0.005};
    Eigen::Vector3d freq2{0.37, 0.29, 0.23};
    Eigen::Vector3d phase2{0.4, 1.1, 2.3};

    Eigen::Vector3d at(int k) const;
};

struct SimConfig {
    int n_calib = 100;
    int n_test = 600;
    double dt = 1.0;
    double q = 0.01;        // process noise Q = q I6
    double alpha = 0.01;    // supervisory noise Psi = alpha I
    double r_base_diag = 0.36;
    double r_base_offdiag = 0.18;
    Eigen::Vector3d r_d_diag{0.81, 1.69, 4.84};
    int downsample = 5;
    double dist_threshold = 3.0;
    int trials = 100;
    std::uint64_t seed = 1;
    // Cancels the mean drift of the default periodic acceleration profile.
    Eigen::Vector3d v0{-0.1376, 0.1, -0.0275};
    double p0_scale = 1.0;  // filter initial covariance P0 = p0_scale * I
    AccelProfile accel;

    Mat r_true() const;
    void validate() const;
};

// states[0] is the initial state; states[k] the truth at step k.
struct Trajectory {
    std::vector<Vec> states;  // length N + 1, 6-vectors [p; v]
    std::vector<Vec> inputs;  // length N, 3-vectors
};

// Constant-velocity double integrator: p advances by dt*v, v by dt*u,
// process noise N(0, qI) on the full state.
SystemModel cv_model(const SimConfig& cfg, int horizon, const Vec& x0);

Trajectory generate_trajectory(const SimConfig& cfg, std::uint64_t seed, int horizon);

// Noisy positions: y_k = p_k + nu_k, nu ~ N(0, R_true), k = 1..N.
std::vector<Vec> generate_primary(const std::vector<Vec>& states, const Mat& r_true,
                                  std::uint64_t seed);

// Every downsample-th step is a candidate; all candidate pairs closer than
// dist_threshold become relative-position observations with noise alpha*I.
// Returns an empty spec when no pair qualifies.
SupervisorySpec generate_supervisory(const std::vector<Vec>& states, const SimConfig& cfg,
                                     std::uint64_t seed);

// One calibration/evaluation method of the Monte-Carlo study.
struct MethodSpec {
    std::string name;
    CovKind r_kind = CovKind::Cholesky;
    GradMode mode = GradMode::Reverse;
    LossWeights weights;
    bool supervised = true;    // false: calibrate on the primary loss alone
    bool tuned = true;         // false: keep R = I (no calibration)
    int downsample = 5;
    double dist_threshold = 3.0;
};

std::vector<MethodSpec> default_methods(const SimConfig& cfg);

struct MonteCarloRow {
    std::string method;
    double mean_rmse = 0.0;
    double se_rmse = 0.0;        // standard error of the mean
    double mean_rel_r_err = 0.0; // mean ||R(theta_hat) - R_true||_F / ||R_true||_F
    double mean_states = 0.0;    // achieved supervisory state count
    double mean_pairs = 0.0;     // achieved supervisory measurement count
    int trials_ok = 0;
    int failures = 0;
};

struct MonteCarloResult {
    std::vector<MonteCarloRow> rows;
    double mean_raw_rmse = 0.0;  // raw measurement RMSE on the test sets
};

MonteCarloResult monte_carlo(const SimConfig& cfg, const std::vector<MethodSpec>& methods,
                             const CalibrationConfig& opt_base, int threads = 1);

struct BenchConfig {
    std::vector<int> p_values{1, 3, 6, 12};
    std::vector<int> n_values{100, 400, 1600};
    int n_fixed = 400;
    int p_fixed = 3;
    int samples = 9;            // best-of over this many timed batches
    double min_sample_seconds = 0.012;
    std::uint64_t seed = 1;
};

struct BenchRow {
    std::string quantity;  // "forward_time" | "reverse_time" | "trace_elements"
    int p = 0;
    int n = 0;
    double seconds = 0.0;          // median wall time per gradient evaluation
    std::size_t trace_elements = 0;
};

// Wall-time per gradient evaluation of each mode over the p sweep at fixed N,
// and retained-trace element counts over the N sweep. Single-threaded.
std::vector<BenchRow> bench_modes(const SimConfig& cfg, const BenchConfig& bench);

// p-coordinate parameterization used by the benches: R(theta) is an isotropic
// mixture sum_j exp(theta_j)/p * I, so every coordinate drives a full
// sensitivity channel; Q stays fixed.
CovParam bench_param(int p, int meas_dim, int proc_dim, const Mat& fixed_q);

}  // namespace kfcal
