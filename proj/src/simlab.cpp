#include "kfcal/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <thread>
#include <utility>

#include "kfcal/linalg.hpp"
#include "kfcal/oracle.hpp"

namespace kfcal {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Eigen::Vector3d AccelProfile::at(int k) const {
    Eigen::Vector3d u;
    for (int i = 0; i < 3; ++i) {
        u[i] = amp1[i] * std::sin(freq1[i] * k + phase1[i]) +
               amp2[i] * std::sin(freq2[i] * k + phase2[i]);
    }
    return u;
}

Mat SimConfig::r_true() const {
    Mat r = Mat::Constant(3, 3, r_base_offdiag);
    r.diagonal().setConstant(r_base_diag);
    r += Mat(r_d_diag.asDiagonal());
    return r;
}

void SimConfig::validate() const {
    if (n_calib < 1 || n_test < 1) throw ConfigError("horizon lengths must be positive");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(q >= 0.0)) throw ConfigError("q must be non-negative");
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
    if (downsample < 1) throw ConfigError("downsample rate must be >= 1");
    if (!(dist_threshold > 0.0)) throw ConfigError("distance threshold must be positive");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    Eigen::LLT<Mat> llt(r_true());
    if (llt.info() != Eigen::Success) throw ConfigError("R_true is not positive definite");
}

SystemModel cv_model(const SimConfig& cfg, int horizon, const Vec& x0) {
    Mat F = Mat::Identity(6, 6);
    F.topRightCorner(3, 3) = cfg.dt * Mat::Identity(3, 3);
    Mat B = Mat::Zero(6, 3);
    B.bottomRows(3) = cfg.dt * Mat::Identity(3, 3);
    Mat H = Mat::Zero(3, 6);
    H.leftCols(3) = Mat::Identity(3, 3);
    Mat P0 = cfg.p0_scale * Mat::Identity(6, 6);
    return SystemModel::time_invariant(F, B, H, x0, P0, horizon);
}

Trajectory generate_trajectory(const SimConfig& cfg, std::uint64_t seed, int horizon) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sq = std::sqrt(cfg.q);

    Trajectory traj;
    traj.states.reserve(horizon + 1);
    traj.inputs.reserve(horizon);
    Vec x(6);
    x << 0.0, 0.0, 0.0, cfg.v0;
    traj.states.push_back(x);
    for (int k = 1; k <= horizon; ++k) {
        const Eigen::Vector3d u = cfg.accel.at(k);
        Vec xn(6);
        for (int i = 0; i < 3; ++i) {
            xn[i] = x[i] + cfg.dt * x[3 + i] + sq * normal(rng);
        }
        for (int i = 0; i < 3; ++i) {
            xn[3 + i] = x[3 + i] + cfg.dt * u[i] + sq * normal(rng);
        }
        x = xn;
        traj.states.push_back(x);
        traj.inputs.push_back(Vec(u));
    }
    return traj;
}

std::vector<Vec> generate_primary(const std::vector<Vec>& states, const Mat& r_true,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = static_cast<int>(states.size()) - 1;
    const bool noiseless = r_true.isZero(0.0);
    Mat L;
    if (!noiseless) L = chol_factor(r_true, "R_true");

    std::vector<Vec> y;
    y.reserve(n);
    for (int k = 1; k <= n; ++k) {
        Vec obs = states[k].head(3);
        if (!noiseless) {
            Vec z(3);
            for (int i = 0; i < 3; ++i) z[i] = normal(rng);
            obs += L * z;
        }
        y.push_back(obs);
    }
    return y;
}

SupervisorySpec generate_supervisory(const std::vector<Vec>& states, const SimConfig& cfg,
                                     std::uint64_t seed) {
    const int n = static_cast<int>(states.size()) - 1;
    std::vector<int> selected;
    for (int k = cfg.downsample; k <= n; k += cfg.downsample) selected.push_back(k);

    std::vector<std::pair<int, int>> pairs;
    for (std::size_t a = 0; a < selected.size(); ++a) {
        for (std::size_t b = a + 1; b < selected.size(); ++b) {
            const double dist =
                (states[selected[a]].head(3) - states[selected[b]].head(3)).norm();
            if (dist <= cfg.dist_threshold) pairs.emplace_back(selected[a], selected[b]);
        }
    }
    if (pairs.empty()) return SupervisorySpec::none();

    std::vector<int> indices;
    for (const auto& [i, j] : pairs) {
        indices.push_back(i);
        indices.push_back(j);
    }
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    const auto slot = [&](int k) {
        return static_cast<int>(std::lower_bound(indices.begin(), indices.end(), k) -
                                indices.begin());
    };

    const int n_pairs = static_cast<int>(pairs.size());
    const int n_states = static_cast<int>(indices.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sa = std::sqrt(cfg.alpha);

    SupervisorySpec spec;
    spec.indices = indices;
    spec.Hs = Mat::Zero(3 * n_pairs, 6 * n_states);
    spec.Psi = cfg.alpha * Mat::Identity(3 * n_pairs, 3 * n_pairs);
    spec.ys = Vec(3 * n_pairs);
    for (int row = 0; row < n_pairs; ++row) {
        const auto& [i, j] = pairs[row];
        spec.Hs.block(3 * row, 6 * slot(i), 3, 3) = Mat::Identity(3, 3);
        spec.Hs.block(3 * row, 6 * slot(j), 3, 3) = -Mat::Identity(3, 3);
        Vec noise(3);
        for (int c = 0; c < 3; ++c) noise[c] = sa * normal(rng);
        spec.ys.segment(3 * row, 3) =
            states[i].head(3) - states[j].head(3) + noise;
    }
    return spec;
}

std::vector<MethodSpec> default_methods(const SimConfig& cfg) {
    const int ds = cfg.downsample;
    const double th = cfg.dist_threshold;
    // The reduced-supervision setting tightens the pairing threshold; halving
    // the sampling rate instead leaves almost no pairs at the default noise.
    return {
        {"untuned", CovKind::Isotropic, GradMode::Forward, {}, false, false, ds, th},
        {"iso-forward-full", CovKind::Isotropic, GradMode::Forward, {}, true, true, ds, th},
        {"diag-forward-full", CovKind::Diagonal, GradMode::Forward, {}, true, true, ds, th},
        {"chol-reverse-primary", CovKind::Cholesky, GradMode::Reverse, {}, false, true, ds, th},
        {"chol-reverse-lminus", CovKind::Cholesky, GradMode::Reverse, {}, true, true, ds,
         2.0 * th / 3.0},
        {"chol-reverse-full", CovKind::Cholesky, GradMode::Reverse, {}, true, true, ds, th},
    };
}

namespace {

struct TrialOutcome {
    std::vector<double> rmse;       // per method, NaN on failure
    std::vector<double> rel_r_err;  // per method, NaN when not applicable
    std::vector<double> sup_states;
    std::vector<double> sup_pairs;
    double raw_rmse = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace

MonteCarloResult monte_carlo(const SimConfig& cfg, const std::vector<MethodSpec>& methods,
                             const CalibrationConfig& opt_base, int threads) {
    cfg.validate();
    opt_base.validate();
    const int n_methods = static_cast<int>(methods.size());
    const Mat r_true = cfg.r_true();
    const double r_true_norm = r_true.norm();
    const std::vector<int> pos_idx{0, 1, 2};

    std::vector<TrialOutcome> outcomes(cfg.trials);

    const auto run_trial = [&](int t) {
        TrialOutcome& out = outcomes[t];
        const double nan = std::numeric_limits<double>::quiet_NaN();
        out.rmse.assign(n_methods, nan);
        out.rel_r_err.assign(n_methods, nan);
        out.sup_states.assign(n_methods, nan);
        out.sup_pairs.assign(n_methods, nan);

        Trajectory calib, test;
        std::vector<Vec> y_calib, y_test;
        try {
            calib = generate_trajectory(cfg, mix_seed(cfg.seed, 4 * t), cfg.n_calib);
            y_calib = generate_primary(calib.states, r_true, mix_seed(cfg.seed, 4 * t + 1));
            test = generate_trajectory(cfg, mix_seed(cfg.seed, 4 * t + 2), cfg.n_test);
            y_test = generate_primary(test.states, r_true, mix_seed(cfg.seed, 4 * t + 3));
        } catch (const std::exception&) {
            return;  // whole trial unusable; every method records a failure
        }

        double raw = 0.0;
        for (int k = 1; k <= cfg.n_test; ++k) {
            raw += (y_test[k - 1] - test.states[k].head(3)).squaredNorm();
        }
        out.raw_rmse = std::sqrt(raw / cfg.n_test);

        SystemModel model_c = cv_model(cfg, cfg.n_calib, calib.states[0]);
        model_c.u = calib.inputs;
        SystemModel model_t = cv_model(cfg, cfg.n_test, test.states[0]);
        model_t.u = test.inputs;
        const std::vector<Vec> truth_t(test.states.begin() + 1, test.states.end());
        const Mat fixed_q = cfg.q * Mat::Identity(6, 6);

        for (int mi = 0; mi < n_methods; ++mi) {
            const MethodSpec& method = methods[mi];
            try {
                CovParam param = CovParam::fixed_q_vary_r(method.r_kind, 3, fixed_q);
                Vec theta_hat = param.default_theta0();
                if (method.tuned) {
                    SupervisorySpec spec;
                    if (method.supervised) {
                        SimConfig sup_cfg = cfg;
                        sup_cfg.downsample = method.downsample;
                        sup_cfg.dist_threshold = method.dist_threshold;
                        spec = generate_supervisory(
                            calib.states, sup_cfg,
                            mix_seed(cfg.seed, 1000 + 16 * t + mi));
                        out.sup_states[mi] = static_cast<double>(spec.indices.size());
                        out.sup_pairs[mi] = spec.obs_dim() / 3.0;
                    }
                    CalibrationConfig oc = opt_base;
                    oc.mode = method.mode;
                    oc.loss_weights = method.weights;
                    CalibrationReport rep = calibrate(model_c, spec, y_calib, param,
                                                      param.default_theta0(), oc);
                    if (rep.aborted) throw NumericalError(rep.note);
                    theta_hat = rep.theta_hat;
                }
                out.rmse[mi] = evaluate(model_t, theta_hat, param, truth_t, y_test, pos_idx);
                out.rel_r_err[mi] = (param.eval_R(theta_hat) - r_true).norm() / r_true_norm;
            } catch (const std::exception&) {
                // failure stays recorded as NaN
            }
        }
    };

    threads = std::max(1, threads);
    if (threads == 1) {
        for (int t = 0; t < cfg.trials; ++t) run_trial(t);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (int t = next.fetch_add(1); t < cfg.trials; t = next.fetch_add(1)) {
                    run_trial(t);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    MonteCarloResult result;
    double raw_sum = 0.0;
    int raw_n = 0;
    for (const auto& out : outcomes) {
        if (std::isfinite(out.raw_rmse)) {
            raw_sum += out.raw_rmse;
            ++raw_n;
        }
    }
    result.mean_raw_rmse = raw_n ? raw_sum / raw_n : 0.0;

    for (int mi = 0; mi < n_methods; ++mi) {
        MonteCarloRow row;
        row.method = methods[mi].name;
        std::vector<double> vals;
        double rel_sum = 0.0, st_sum = 0.0, pr_sum = 0.0;
        int rel_n = 0, sup_n = 0;
        for (const auto& out : outcomes) {
            if (out.rmse.empty() || !std::isfinite(out.rmse[mi])) {
                ++row.failures;
                continue;
            }
            vals.push_back(out.rmse[mi]);
            if (std::isfinite(out.rel_r_err[mi])) {
                rel_sum += out.rel_r_err[mi];
                ++rel_n;
            }
            if (std::isfinite(out.sup_states[mi])) {
                st_sum += out.sup_states[mi];
                pr_sum += out.sup_pairs[mi];
                ++sup_n;
            }
        }
        row.trials_ok = static_cast<int>(vals.size());
        if (!vals.empty()) {
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= vals.size();
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            var = vals.size() > 1 ? var / (vals.size() - 1) : 0.0;
            row.mean_rmse = mean;
            row.se_rmse = std::sqrt(var / vals.size());
        }
        if (rel_n) row.mean_rel_r_err = rel_sum / rel_n;
        if (sup_n) {
            row.mean_states = st_sum / sup_n;
            row.mean_pairs = pr_sum / sup_n;
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

CovParam bench_param(int p, int meas_dim, int proc_dim, const Mat& fixed_q) {
    const Mat eye = Mat::Identity(meas_dim, meas_dim);
    return CovParam::custom(
        p, meas_dim, proc_dim,
        [p, eye](const Vec& th) {
            double s = 0.0;
            for (int j = 0; j < p; ++j) s += std::exp(th[j]);
            return Mat(s / p * eye);
        },
        [p, eye](const Vec& th, int j) { return Mat(std::exp(th[j]) / p * eye); },
        [fixed_q](const Vec&, int) { return fixed_q; },
        [proc_dim](const Vec&, int, int) { return Mat(Mat::Zero(proc_dim, proc_dim)); });
}

namespace {

// Dense random stable system for the timing benches. A larger state than the
// simulation experiment keeps the cubic matrix work dominant over fixed
// per-operation overheads, which is the regime the complexity claims address.
constexpr int kBenchStateDim = 12;
constexpr int kBenchMeasDim = 6;

struct BenchInstance {
    SystemModel model;
    std::vector<Vec> y;
    Mat fixed_q;
};

BenchInstance bench_instance(int horizon, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const auto rmat = [&](int r, int c, double s) {
        Mat m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = s * nd(rng);
        return m;
    };
    const int d = kBenchStateDim, m = kBenchMeasDim;
    Mat f = rmat(d, d, 1.0);
    f *= 0.95 / std::max(0.95, f.operatorNorm());
    Mat b = rmat(d, 2, 0.5);
    Mat h = rmat(m, d, 1.0);
    Mat a = rmat(d, d, 0.5);
    BenchInstance inst;
    inst.model = SystemModel::time_invariant(
        f, b, h, rmat(d, 1, 1.0).col(0), Mat(a * a.transpose() + 0.3 * Mat::Identity(d, d)),
        horizon);
    for (int k = 0; k < horizon; ++k) {
        inst.model.u[k] = rmat(2, 1, 0.5).col(0);
        inst.y.push_back(rmat(m, 1, 1.5).col(0));
    }
    inst.fixed_q = 0.1 * Mat::Identity(d, d);
    return inst;
}

// Best (smallest) per-call wall times for a family of workloads, measured in
// rotating rounds so that machine noise hits every workload alike; within a
// round each workload runs one batch of at least min_seconds. Noise can only
// inflate a batch, so the per-workload minimum over rounds is the robust
// estimator on a shared machine, and the rotation keeps ratios between
// workloads meaningful even under sustained load.
template <typename Fn>
std::vector<double> time_best_rotating(const std::vector<Fn>& fns, int rounds,
                                       double min_seconds) {
    using clock = std::chrono::steady_clock;
    const int n = static_cast<int>(fns.size());
    std::vector<int> reps(n, 1);
    for (int i = 0; i < n; ++i) {
        fns[i]();  // warm up
        const auto t0 = clock::now();
        fns[i]();
        const double est = std::chrono::duration<double>(clock::now() - t0).count();
        reps[i] = std::max(1, static_cast<int>(std::ceil(min_seconds / std::max(est, 1e-9))));
    }
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    for (int round = 0; round < rounds; ++round) {
        for (int i = 0; i < n; ++i) {
            const auto t0 = clock::now();
            for (int r = 0; r < reps[i]; ++r) fns[i]();
            best[i] = std::min(
                best[i],
                std::chrono::duration<double>(clock::now() - t0).count() / reps[i]);
        }
    }
    return best;
}

}  // namespace

std::vector<BenchRow> bench_modes(const SimConfig&, const BenchConfig& bench) {
    std::vector<BenchRow> rows;

    {
        BenchInstance inst = bench_instance(bench.n_fixed, mix_seed(bench.seed, 0));
        const SupervisorySpec no_sup = SupervisorySpec::none();
        std::vector<CovParam> params;
        for (int p : bench.p_values) {
            params.push_back(bench_param(p, kBenchMeasDim, kBenchStateDim, inst.fixed_q));
        }
        std::vector<std::function<void()>> work;
        for (std::size_t i = 0; i < bench.p_values.size(); ++i) {
            const CovParam& param = params[i];
            const int p = bench.p_values[i];
            work.push_back([&inst, &no_sup, &param, p] {
                forward_gradient(inst.model, no_sup, inst.y, param, Vec::Zero(p));
            });
            work.push_back([&inst, &no_sup, &param, p] {
                reverse_gradient(inst.model, no_sup, inst.y, param, Vec::Zero(p));
            });
        }
        const std::vector<double> best =
            time_best_rotating(work, bench.samples, bench.min_sample_seconds);
        for (std::size_t i = 0; i < bench.p_values.size(); ++i) {
            rows.push_back({"forward_time", bench.p_values[i], bench.n_fixed,
                            best[2 * i], 0});
            rows.push_back({"reverse_time", bench.p_values[i], bench.n_fixed,
                            best[2 * i + 1], 0});
        }
    }

    for (int n : bench.n_values) {
        BenchInstance inst = bench_instance(n, mix_seed(bench.seed, n));
        CovParam param = bench_param(bench.p_fixed, kBenchMeasDim, kBenchStateDim,
                                     inst.fixed_q);
        FilterResult fr = run_filter(inst.model, SupervisorySpec::none(), inst.y, param,
                                     Vec::Zero(bench.p_fixed), {.keep_trace = true});
        rows.push_back({"trace_elements", bench.p_fixed, n, 0.0,
                        fr.trace.element_count()});
    }
    return rows;
}

}  // namespace kfcal
