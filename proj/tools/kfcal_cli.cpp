// kfcal: noise-covariance calibration for linear Gaussian state-space models.
//
// Subcommands: config, simulate, calibrate, evaluate, loss, gradcheck,
// montecarlo, bench. Exit codes: 0 success, 2 config error, 3 numerical
// failure, 4 check failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kfcal/io.hpp"
#include "kfcal/linalg.hpp"
#include "kfcal/oracle.hpp"

namespace fs = std::filesystem;
using namespace kfcal;

namespace {

struct CliOptions {
    std::string config_path;
    std::string data_dir;
    std::string out_dir = "out";
    std::string mode;           // forward|reverse
    std::string param;          // isotropic|diagonal|cholesky
    std::string loss = "full";  // full|primary-only
    std::string report_path;
    std::vector<double> theta;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int trials = 0;
    int itermax = 0;
    int threads = 1;
    bool quick_bench = false;
    std::string pbar_form = "r-inverse";  // diagnostic switch for gradcheck
};

RunConfig make_config(const CliOptions& opt) {
    RunConfig cfg = opt.config_path.empty() ? default_config() : load_config(opt.config_path);
    if (opt.seed_set) cfg.sim.seed = opt.seed;
    if (opt.trials > 0) cfg.sim.trials = opt.trials;
    if (opt.itermax > 0) cfg.opt.itermax = opt.itermax;
    if (!opt.param.empty()) {
        if (opt.param == "isotropic") cfg.param_kind = CovKind::Isotropic;
        else if (opt.param == "diagonal") cfg.param_kind = CovKind::Diagonal;
        else if (opt.param == "cholesky") cfg.param_kind = CovKind::Cholesky;
        else throw ConfigError("--param must be isotropic|diagonal|cholesky");
    }
    if (!opt.mode.empty()) {
        if (opt.mode == "forward") cfg.opt.mode = GradMode::Forward;
        else if (opt.mode == "reverse") cfg.opt.mode = GradMode::Reverse;
        else throw ConfigError("--mode must be forward|reverse");
        cfg.mode_explicit = true;
    }
    return cfg;
}

// Calibration-side system model for a loaded dataset.
SystemModel dataset_calib_model(const Dataset& data) {
    SystemModel m = cv_model(data.sim, data.sim.n_calib, data.calib.states[0]);
    m.u = data.calib.inputs;
    return m;
}

SystemModel dataset_test_model(const Dataset& data) {
    SystemModel m = cv_model(data.sim, data.sim.n_test, data.test.states[0]);
    m.u = data.test.inputs;
    return m;
}

Vec resolve_theta(const CliOptions& opt, const CovParam& param, const RunConfig& cfg) {
    if (!opt.report_path.empty()) {
        Vec th = load_theta_hat(opt.report_path);
        if (th.size() != param.dim()) {
            throw ConfigError("theta_hat in " + opt.report_path + " has " +
                              std::to_string(th.size()) + " entries, kind needs " +
                              std::to_string(param.dim()));
        }
        return th;
    }
    if (!opt.theta.empty()) {
        if (static_cast<int>(opt.theta.size()) != param.dim()) {
            throw ConfigError("--theta needs " + std::to_string(param.dim()) + " entries");
        }
        return Eigen::Map<const Vec>(opt.theta.data(), opt.theta.size());
    }
    return cfg.make_theta0(param);
}

int cmd_config(const CliOptions& opt) {
    RunConfig cfg = make_config(opt);
    std::cout << config_to_json(cfg);
    return 0;
}

int cmd_simulate(const CliOptions& opt) {
    RunConfig cfg = make_config(opt);
    const SimConfig& sim = cfg.sim;
    Dataset data;
    data.sim = sim;
    data.calib = generate_trajectory(sim, mix_seed(sim.seed, 0), sim.n_calib);
    data.y_calib = generate_primary(data.calib.states, sim.r_true(), mix_seed(sim.seed, 1));
    data.test = generate_trajectory(sim, mix_seed(sim.seed, 2), sim.n_test);
    data.y_test = generate_primary(data.test.states, sim.r_true(), mix_seed(sim.seed, 3));
    data.spec = generate_supervisory(data.calib.states, sim, mix_seed(sim.seed, 4));
    save_dataset(opt.out_dir, data);
    std::cout << "wrote " << (fs::path(opt.out_dir) / "calib.csv").string() << " ("
              << sim.n_calib << " steps), test.csv (" << sim.n_test << " steps)\n";
    if (data.spec.empty()) {
        std::cout << "warning: no supervisory pairs under downsample=" << sim.downsample
                  << ", threshold=" << sim.dist_threshold
                  << "; calibration degenerates to the primary loss\n";
    } else {
        std::cout << "supervisory: " << data.spec.indices.size() << " states, "
                  << data.spec.obs_dim() / 3 << " pair measurements\n";
    }
    return 0;
}

int cmd_calibrate(const CliOptions& opt) {
    RunConfig cfg = make_config(opt);
    Dataset data = load_dataset(opt.data_dir);
    SystemModel model = dataset_calib_model(data);
    CovParam param = cfg.make_param();
    const Vec theta0 = cfg.make_theta0(param);

    SupervisorySpec spec = data.spec;
    if (opt.loss == "primary-only") {
        spec = SupervisorySpec::none();
    } else if (opt.loss != "full") {
        throw ConfigError("--loss must be full|primary-only");
    }
    CalibrationConfig oc = cfg.opt;
    oc.mode = cfg.resolved_mode();

    CalibrationReport rep = calibrate(model, spec, data.y_calib, param, theta0, oc);
    fs::create_directories(opt.out_dir);
    save_calibration_report(fs::path(opt.out_dir) / "report.json",
                            fs::path(opt.out_dir) / "loss_history.csv", rep, param,
                            oc.mode);
    if (rep.aborted) {
        std::cerr << "calibration aborted: " << rep.note << "\n";
        return 3;
    }
    std::cout << "calibrated " << to_string(param.r_kind()) << " via " << to_string(oc.mode)
              << " in " << rep.iterations << " iterations; final loss "
              << fmt_full(rep.loss_history.back()) << "\n";
    std::cout << "wrote " << (fs::path(opt.out_dir) / "report.json").string() << "\n";
    return 0;
}

int cmd_evaluate(const CliOptions& opt) {
    RunConfig cfg = make_config(opt);
    Dataset data = load_dataset(opt.data_dir);
    CovParam param = cfg.make_param();
    const Vec theta = resolve_theta(opt, param, cfg);

    SystemModel model = dataset_test_model(data);
    std::vector<Vec> truth(data.test.states.begin() + 1, data.test.states.end());
    const double rmse = evaluate(model, theta, param, truth, data.y_test, {0, 1, 2});

    double raw = 0.0;
    for (std::size_t k = 0; k < data.y_test.size(); ++k) {
        raw += (data.y_test[k] - truth[k].head(3)).squaredNorm();
    }
    raw = std::sqrt(raw / data.y_test.size());

    std::cout << "position RMSE: " << fmt_full(rmse) << " m (raw measurements: "
              << fmt_full(raw) << " m)\n";
    fs::create_directories(opt.out_dir);
    std::ofstream out(fs::path(opt.out_dir) / "evaluate.json");
    out << "{\n  \"rmse\": " << fmt_full(rmse) << ",\n  \"raw_rmse\": " << fmt_full(raw)
        << "\n}\n";
    return 0;
}

int cmd_loss(const CliOptions& opt) {
    RunConfig cfg = make_config(opt);
    Dataset data = load_dataset(opt.data_dir);
    SystemModel model = dataset_calib_model(data);
    CovParam param = cfg.make_param();
    const Vec theta = resolve_theta(opt, param, cfg);

    FilterResult fr = run_filter(model, data.spec, data.y_calib, param, theta,
                                 {.keep_trace = true});
    fs::create_directories(opt.out_dir);
    save_loss_json(fs::path(opt.out_dir) / "loss.json", fr.loss);
    save_loss_per_step_csv(fs::path(opt.out_dir) / "loss_per_step.csv", fr.loss, fr.trace);
    std::cout << "ell_o = " << fmt_full(fr.loss.ell_o) << ", ell_s = "
              << fmt_full(fr.loss.ell_s) << ", total = " << fmt_full(fr.loss.total) << "\n";
    return 0;
}

// Keeps Hs rows whose support lies within supervised states at steps <= n_max.
SupervisorySpec truncate_spec(const SupervisorySpec& spec, int n_max, int d) {
    if (spec.empty()) return spec;
    std::vector<int> kept_idx;
    for (int i : spec.indices) {
        if (i <= n_max) kept_idx.push_back(i);
    }
    if (kept_idx.empty()) return SupervisorySpec::none();

    std::vector<int> kept_rows;
    for (int row = 0; row < spec.Hs.rows(); ++row) {
        bool ok = true;
        for (std::size_t t = 0; t < spec.indices.size(); ++t) {
            const bool used = !spec.Hs.block(row, t * d, 1, d).isZero(0.0);
            if (used && spec.indices[t] > n_max) {
                ok = false;
                break;
            }
        }
        if (ok) kept_rows.push_back(row);
    }
    if (kept_rows.empty()) return SupervisorySpec::none();

    SupervisorySpec out;
    out.indices = kept_idx;
    out.Hs = Mat::Zero(kept_rows.size(), d * kept_idx.size());
    out.ys = Vec(kept_rows.size());
    out.Psi = Mat::Zero(kept_rows.size(), kept_rows.size());
    for (std::size_t a = 0; a < kept_rows.size(); ++a) {
        out.ys[a] = spec.ys[kept_rows[a]];
        for (std::size_t b = 0; b < kept_rows.size(); ++b) {
            out.Psi(a, b) = spec.Psi(kept_rows[a], kept_rows[b]);
        }
        for (std::size_t t = 0; t < kept_idx.size(); ++t) {
            const auto src = std::lower_bound(spec.indices.begin(), spec.indices.end(),
                                              kept_idx[t]) -
                             spec.indices.begin();
            out.Hs.block(a, t * d, 1, d) = spec.Hs.block(kept_rows[a], src * d, 1, d);
        }
    }
    return out;
}

int cmd_gradcheck(const CliOptions& opt) {
    RunConfig cfg = make_config(opt);
    Dataset data;
    if (!opt.data_dir.empty()) {
        data = load_dataset(opt.data_dir);
    } else {
        const SimConfig& sim = cfg.sim;
        data.sim = sim;
        data.calib = generate_trajectory(sim, mix_seed(sim.seed, 0), sim.n_calib);
        data.y_calib = generate_primary(data.calib.states, sim.r_true(), mix_seed(sim.seed, 1));
        data.spec = generate_supervisory(data.calib.states, sim, mix_seed(sim.seed, 4));
    }
    SystemModel model = dataset_calib_model(data);
    CovParam param = cfg.make_param();
    const Vec theta = resolve_theta(opt, param, cfg);
    const PbarAdjointForm form = opt.pbar_form == "s-inverse" ? PbarAdjointForm::SInverse
                                                              : PbarAdjointForm::RInverse;

    const double kFwdRevTol = 1e-8, kFdTol = 1e-4, kOracleTol = 1e-8;
    bool fail = false;

    GradientResult gf = forward_gradient(model, data.spec, data.y_calib, param, theta);
    GradientResult gr = reverse_gradient(model, data.spec, data.y_calib, param, theta,
                                         {}, form);
    double d_modes = 0.0;
    for (int j = 0; j < param.dim(); ++j) {
        const double den = std::max({std::abs(gf.grad[j]), std::abs(gr.grad[j]), 1e-12});
        d_modes = std::max(d_modes, std::abs(gf.grad[j] - gr.grad[j]) / den);
    }
    std::printf("forward vs reverse    : max rel err %.3e (tol %.0e) %s\n", d_modes,
                kFwdRevTol, d_modes <= kFwdRevTol ? "ok" : "FAIL");
    fail |= d_modes > kFwdRevTol;

    Vec g_fd = fd_gradient(
        [&](const Vec& th) {
            return run_filter(model, data.spec, data.y_calib, param, th).loss.total;
        },
        theta);
    double d_fd = 0.0;
    for (int j = 0; j < param.dim(); ++j) {
        const double den = std::max({std::abs(g_fd[j]), std::abs(gf.grad[j]), 1e-6});
        const double e_f = std::abs(gf.grad[j] - g_fd[j]) / den;
        const double e_r = std::abs(gr.grad[j] - g_fd[j]) / den;
        d_fd = std::max({d_fd, e_f, e_r});
    }
    std::printf("analytic vs central FD: max rel err %.3e (tol %.0e) %s\n", d_fd, kFdTol,
                d_fd <= kFdTol ? "ok" : "FAIL");
    fail |= d_fd > kFdTol;

    const int d = model.state_dim();
    const int n_orc = std::min(model.horizon(), kOracleMaxStackedDim / d);
    SystemModel model_orc = model;
    model_orc.F.resize(n_orc);
    model_orc.B.resize(n_orc);
    model_orc.H.resize(n_orc);
    model_orc.u.resize(n_orc);
    std::vector<Vec> y_orc(data.y_calib.begin(), data.y_calib.begin() + n_orc);
    SupervisorySpec spec_orc = truncate_spec(data.spec, n_orc, d);
    const double filter_total =
        run_filter(model_orc, spec_orc, y_orc, param, theta).loss.total;
    const double oracle_total = joint_nll(model_orc, spec_orc, y_orc, param, theta);
    const double d_orc = std::abs(filter_total - oracle_total);
    std::printf("filter vs joint NLL   : abs err %.3e over %d steps (tol %.0e) %s\n", d_orc,
                n_orc, kOracleTol, d_orc <= kOracleTol ? "ok" : "FAIL");
    fail |= d_orc > kOracleTol;

    if (data.spec.empty()) {
        std::printf("supervisory term      : skipped (no supervisory measurements)\n");
    }
    return fail ? 4 : 0;
}

int cmd_montecarlo(const CliOptions& opt) {
    RunConfig cfg = make_config(opt);
    CalibrationConfig oc = cfg.opt;
    MonteCarloResult res = monte_carlo(cfg.sim, default_methods(cfg.sim), oc, opt.threads);
    fs::create_directories(opt.out_dir);
    save_montecarlo_csv(fs::path(opt.out_dir) / "montecarlo.csv", res);
    std::printf("%-22s %10s %10s %8s %8s %6s\n", "method", "mean_rmse", "se", "states",
                "pairs", "fail");
    for (const auto& row : res.rows) {
        std::printf("%-22s %10.4f %10.4f %8.1f %8.1f %6d\n", row.method.c_str(),
                    row.mean_rmse, row.se_rmse, row.mean_states, row.mean_pairs,
                    row.failures);
    }
    std::printf("raw measurement RMSE: %.4f m over %d trials\n", res.mean_raw_rmse,
                cfg.sim.trials);
    std::cout << "wrote " << (fs::path(opt.out_dir) / "montecarlo.csv").string() << "\n";
    return 0;
}

int cmd_bench(const CliOptions& opt) {
    RunConfig cfg = make_config(opt);
    BenchConfig bench;
    bench.seed = cfg.sim.seed;
    if (opt.quick_bench) {
        bench.samples = 3;
        bench.min_sample_seconds = 0.005;
    }
    std::vector<BenchRow> rows = bench_modes(cfg.sim, bench);
    fs::create_directories(opt.out_dir);
    save_bench_csv(fs::path(opt.out_dir) / "bench.csv", rows);
    for (const auto& row : rows) {
        if (row.quantity == "trace_elements") {
            std::printf("%-15s p=%-3d N=%-5d elements=%zu\n", row.quantity.c_str(), row.p,
                        row.n, row.trace_elements);
        } else {
            std::printf("%-15s p=%-3d N=%-5d %.6f s/eval\n", row.quantity.c_str(), row.p,
                        row.n, row.seconds);
        }
    }
    std::cout << "wrote " << (fs::path(opt.out_dir) / "bench.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Noise covariance calibration for linear Gaussian state-space models"};
    app.require_subcommand(1);
    CliOptions opt;

    const auto add_common = [&](CLI::App* sub, bool with_data) {
        sub->add_option("--config", opt.config_path, "JSON run configuration");
        sub->add_option("--out", opt.out_dir, "output directory");
        sub->add_option("--seed", opt.seed, "seed override")
            ->each([&](const std::string&) { opt.seed_set = true; });
        if (with_data) {
            sub->add_option("--data", opt.data_dir, "dataset directory from `simulate`");
        }
    };

    CLI::App* c_config = app.add_subcommand("config", "print the effective configuration");
    add_common(c_config, false);
    c_config->add_option("--param", opt.param, "parameterization kind");

    CLI::App* c_sim = app.add_subcommand("simulate", "synthesize calibration/test data");
    add_common(c_sim, false);

    CLI::App* c_cal = app.add_subcommand("calibrate", "estimate theta on a dataset");
    add_common(c_cal, true);
    c_cal->get_option("--data")->required();
    c_cal->add_option("--mode", opt.mode, "forward|reverse");
    c_cal->add_option("--param", opt.param, "isotropic|diagonal|cholesky");
    c_cal->add_option("--loss", opt.loss, "full|primary-only");
    c_cal->add_option("--itermax", opt.itermax, "iteration budget override");

    CLI::App* c_eval = app.add_subcommand("evaluate", "test-trajectory RMSE for a theta");
    add_common(c_eval, true);
    c_eval->get_option("--data")->required();
    c_eval->add_option("--param", opt.param, "isotropic|diagonal|cholesky");
    c_eval->add_option("--report", opt.report_path, "report.json with theta_hat");
    c_eval->add_option("--theta", opt.theta, "explicit theta values");

    CLI::App* c_loss = app.add_subcommand("loss", "loss breakdown on the calibration data");
    add_common(c_loss, true);
    c_loss->get_option("--data")->required();
    c_loss->add_option("--param", opt.param, "isotropic|diagonal|cholesky");
    c_loss->add_option("--report", opt.report_path, "report.json with theta_hat");
    c_loss->add_option("--theta", opt.theta, "explicit theta values");

    CLI::App* c_gc = app.add_subcommand("gradcheck", "gradient and likelihood cross-checks");
    add_common(c_gc, true);
    c_gc->add_option("--param", opt.param, "isotropic|diagonal|cholesky");
    c_gc->add_option("--theta", opt.theta, "check point override");
    c_gc->add_option("--pbar-form", opt.pbar_form,
                     "covariance-adjoint form, r-inverse|s-inverse (diagnostic)");

    CLI::App* c_mc = app.add_subcommand("montecarlo", "Monte-Carlo RMSE study");
    add_common(c_mc, false);
    c_mc->add_option("--trials", opt.trials, "trial count override");
    c_mc->add_option("--threads", opt.threads, "worker pool size");
    c_mc->add_option("--itermax", opt.itermax, "iteration budget override");

    CLI::App* c_bench = app.add_subcommand("bench", "gradient-mode timing/space benchmarks");
    add_common(c_bench, false);
    c_bench->add_flag("--quick", opt.quick_bench, "fewer samples, shorter batches");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (c_config->parsed()) return cmd_config(opt);
        if (c_sim->parsed()) return cmd_simulate(opt);
        if (c_cal->parsed()) return cmd_calibrate(opt);
        if (c_eval->parsed()) return cmd_evaluate(opt);
        if (c_loss->parsed()) return cmd_loss(opt);
        if (c_gc->parsed()) return cmd_gradcheck(opt);
        if (c_mc->parsed()) return cmd_montecarlo(opt);
        if (c_bench->parsed()) return cmd_bench(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ModelError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParamError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const OracleScaleError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
