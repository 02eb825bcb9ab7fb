#include "kfcal/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace kfcal {

namespace {

constexpr double kArmijoC = 1e-4;
constexpr int kMaxBacktracks = 60;

double weighted_loss(const SystemModel& model, const SupervisorySpec& spec,
                     const std::vector<Vec>& y_o, const CovParam& param,
                     const Vec& theta, const LossWeights& w) {
    return run_filter(model, spec, y_o, param, theta).loss.weighted(w);
}

}  // namespace

const char* to_string(GradMode mode) {
    return mode == GradMode::Forward ? "forward" : "reverse";
}

void CalibrationConfig::validate() const {
    if (itermax < 1) throw ConfigError("itermax must be >= 1");
    if (!(eta0 > 0.0)) throw ConfigError("eta0 must be positive");
    if (!(grad_tol >= 0.0)) throw ConfigError("grad_tol must be non-negative");
}

CalibrationReport calibrate(const SystemModel& model, const SupervisorySpec& spec,
                            const std::vector<Vec>& y_o, const CovParam& param,
                            const Vec& theta0, const CalibrationConfig& cfg) {
    cfg.validate();
    if (!theta0.allFinite()) throw ConfigError("theta0 must be finite");

    CalibrationReport rep;
    Vec theta = theta0;

    for (int it = 0; it < cfg.itermax; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        GradientResult gr;
        try {
            gr = cfg.mode == GradMode::Forward
                     ? forward_gradient(model, spec, y_o, param, theta, cfg.loss_weights)
                     : reverse_gradient(model, spec, y_o, param, theta, cfg.loss_weights);
        } catch (const NumericalError& e) {
            rep.aborted = true;
            rep.note = std::string(e.what()) + " at iteration " + std::to_string(it);
            break;
        }
        const double f = gr.loss.weighted(cfg.loss_weights);
        const double gnorm = gr.grad.norm();

        if (!std::isfinite(f) || !gr.grad.allFinite()) {
            rep.aborted = true;
            rep.note = "non-finite loss or gradient at iteration " + std::to_string(it);
            break;
        }
        rep.loss_history.push_back(f);
        rep.grad_norm_history.push_back(gnorm);
        rep.ell_o_history.push_back(gr.loss.ell_o);
        rep.ell_s_history.push_back(gr.loss.ell_s);
        ++rep.iterations;

        if (gnorm <= cfg.grad_tol) {
            rep.converged = true;
            rep.step_sizes.push_back(0.0);
            rep.iter_seconds.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            break;
        }

        if (cfg.line_search) {
            double eta = cfg.eta0;
            bool accepted = false;
            for (int t = 0; t < kMaxBacktracks; ++t) {
                Vec cand = theta - eta * gr.grad;
                double fc;
                try {
                    fc = weighted_loss(model, spec, y_o, param, cand, cfg.loss_weights);
                } catch (const NumericalError&) {
                    fc = std::numeric_limits<double>::quiet_NaN();
                }
                if (std::isfinite(fc) && fc <= f - kArmijoC * eta * gnorm * gnorm) {
                    theta = std::move(cand);
                    rep.step_sizes.push_back(eta);
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if (!accepted) {
                rep.note = "line search stalled at iteration " + std::to_string(it);
                rep.step_sizes.push_back(0.0);
                rep.iter_seconds.push_back(
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
                break;
            }
        } else {
            theta -= cfg.eta0 * gr.grad;
            rep.step_sizes.push_back(cfg.eta0);
        }
        rep.iter_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }

    rep.theta_hat = theta;
    return rep;
}

double evaluate(const SystemModel& model_test, const Vec& theta_hat,
                const CovParam& param, const std::vector<Vec>& truth,
                const std::vector<Vec>& y_test, const std::vector<int>& err_indices) {
    model_test.validate();
    const int n = model_test.horizon();
    if (static_cast<int>(truth.size()) != n || static_cast<int>(y_test.size()) != n) {
        throw ModelError("evaluate: truth/measurement sequences must match the horizon");
    }
    const Mat R = param.eval_R(theta_hat);
    AugmentedBelief b = make_initial_belief(model_test);
    double sq = 0.0;
    for (int k = 1; k <= n; ++k) {
        const Mat Q = param.eval_Q(theta_hat, k);
        b = predict(std::move(b), model_test.F[k - 1], model_test.B[k - 1],
                    model_test.u[k - 1], Q);
        UpdateResult ur = update(std::move(b), model_test.H[k - 1], R, y_test[k - 1], k);
        b = std::move(ur.posterior);
        for (int i : err_indices) {
            const double e = b.X[i] - truth[k - 1][i];
            sq += e * e;
        }
    }
    return std::sqrt(sq / n);
}

}  // namespace kfcal
