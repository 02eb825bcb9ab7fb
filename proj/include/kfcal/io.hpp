#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kfcal/optimizer.hpp"
#include "kfcal/simlab.hpp"

namespace kfcal {

// One JSON document with sections {system, parameterization, supervisory,
// optimizer, simulation}; every field optional, defaults reproduce the
// built-in constant-velocity experiment.
struct RunConfig {
    SimConfig sim;
    CovKind param_kind = CovKind::Cholesky;
    std::optional<Vec> theta0;            // defaults to zeros of the kind's dimension
    CalibrationConfig opt;
    bool mode_explicit = false;           // whether optimizer.mode was given

    CovParam make_param() const;
    Vec make_theta0(const CovParam& param) const;
    // Reverse for the Cholesky kind, forward otherwise, unless set explicitly.
    GradMode resolved_mode() const;
};

RunConfig default_config();
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);

// Full round-trip decimal formatting for every numeric CSV/JSON field.
std::string fmt_full(double v);

// Dataset directory layout written by `simulate`:
//   calib.csv, test.csv   rows: k, x1..x6, u1..u3, y1..y3
//   supervisory.json      indices, pairs, alpha, ys
//   meta.json             seeds, x0, dt, q, p0_scale, horizons
struct Dataset {
    Trajectory calib;
    std::vector<Vec> y_calib;
    Trajectory test;
    std::vector<Vec> y_test;
    SupervisorySpec spec;
    SimConfig sim;  // dt, q, p0_scale as recorded in meta.json
};

void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

void save_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj,
                         const std::vector<Vec>& y);
void save_supervisory_json(const std::filesystem::path& path, const SupervisorySpec& spec,
                           double alpha);
SupervisorySpec load_supervisory_json(const std::filesystem::path& path);

void save_calibration_report(const std::filesystem::path& json_path,
                             const std::filesystem::path& csv_path,
                             const CalibrationReport& rep, const CovParam& param,
                             GradMode mode);
Vec load_theta_hat(const std::filesystem::path& json_path);

void save_loss_json(const std::filesystem::path& path, const LossBreakdown& loss);
void save_loss_per_step_csv(const std::filesystem::path& path, const LossBreakdown& loss,
                            const FilterTrace& trace);

void save_montecarlo_csv(const std::filesystem::path& path, const MonteCarloResult& res);
void save_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

}  // namespace kfcal
