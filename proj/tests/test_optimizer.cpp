#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kfcal/optimizer.hpp"
#include "kfcal/simlab.hpp"
#include "test_support.hpp"

using namespace kfcal;
using namespace kfcal::test;

TEST_CASE("line search keeps the loss history non-increasing") {
    std::mt19937_64 rng(81);
    for (int rep = 0; rep < 6; ++rep) {
        Instance inst = random_instance(rng, {.min_d = 2, .max_d = 3, .min_n = 5,
                                              .max_n = 8, .max_sup = 2});
        CalibrationConfig cfg;
        cfg.mode = rep % 2 ? GradMode::Forward : GradMode::Reverse;
        cfg.itermax = 15;
        CalibrationReport rep_out = calibrate(inst.model, inst.spec, inst.y, inst.param,
                                              inst.theta, cfg);
        REQUIRE(!rep_out.aborted);
        for (std::size_t i = 1; i < rep_out.loss_history.size(); ++i) {
            CHECK(rep_out.loss_history[i] <= rep_out.loss_history[i - 1] + 1e-12);
        }
    }
}

TEST_CASE("dropping the supervisory weight reproduces the primary-only run") {
    std::mt19937_64 rng(82);
    Instance inst;
    do {
        inst = random_instance(rng, {.min_d = 2, .max_d = 2, .min_n = 6, .max_n = 8,
                                     .max_sup = 2});
    } while (inst.spec.empty());

    CalibrationConfig weighted;
    weighted.itermax = 8;
    weighted.loss_weights = {1.0, 0.0};
    CalibrationReport a = calibrate(inst.model, inst.spec, inst.y, inst.param, inst.theta,
                                    weighted);

    CalibrationConfig plain;
    plain.itermax = 8;
    CalibrationReport b = calibrate(inst.model, SupervisorySpec::none(), inst.y, inst.param,
                                    inst.theta, plain);

    REQUIRE(a.iterations == b.iterations);
    CHECK((a.theta_hat - b.theta_hat).cwiseAbs().maxCoeff() < 1e-10);
    for (int i = 0; i < a.iterations; ++i) {
        CHECK(rel_err(a.ell_o_history[i], b.ell_o_history[i]) < 1e-12);
        CHECK(rel_err(a.loss_history[i], b.loss_history[i]) < 1e-12);
    }
}

TEST_CASE("calibration is deterministic") {
    std::mt19937_64 rng(83);
    Instance inst = random_instance(rng, {.min_n = 5, .max_n = 8});
    CalibrationConfig cfg;
    cfg.itermax = 6;
    CalibrationReport a = calibrate(inst.model, inst.spec, inst.y, inst.param, inst.theta, cfg);
    CalibrationReport b = calibrate(inst.model, inst.spec, inst.y, inst.param, inst.theta, cfg);
    REQUIRE(a.theta_hat.size() == b.theta_hat.size());
    for (int i = 0; i < a.theta_hat.size(); ++i) CHECK(a.theta_hat[i] == b.theta_hat[i]);
    CHECK(a.loss_history == b.loss_history);
    CHECK(a.grad_norm_history == b.grad_norm_history);
}

TEST_CASE("forward and reverse descend identically at a fixed step size") {
    std::mt19937_64 rng(84);
    Instance inst = random_instance(rng, {.min_d = 2, .max_d = 3, .min_n = 6, .max_n = 8});
    CalibrationConfig cfg;
    cfg.itermax = 8;
    cfg.line_search = false;
    cfg.eta0 = 0.02;
    cfg.mode = GradMode::Forward;
    CalibrationReport f = calibrate(inst.model, inst.spec, inst.y, inst.param, inst.theta, cfg);
    cfg.mode = GradMode::Reverse;
    CalibrationReport r = calibrate(inst.model, inst.spec, inst.y, inst.param, inst.theta, cfg);
    CHECK((f.theta_hat - r.theta_hat).cwiseAbs().maxCoeff() < 1e-6);
    for (int i = 0; i < f.iterations; ++i) {
        CHECK(rel_err(f.loss_history[i], r.loss_history[i]) < 1e-9);
    }
}

TEST_CASE("gradient-tolerance stop") {
    std::mt19937_64 rng(85);
    Instance inst = random_instance(rng, {.min_n = 4, .max_n = 6});
    CalibrationConfig cfg;
    cfg.itermax = 50;
    cfg.grad_tol = 1e30;  // trips immediately
    CalibrationReport rep = calibrate(inst.model, inst.spec, inst.y, inst.param, inst.theta,
                                      cfg);
    CHECK(rep.converged);
    CHECK(rep.iterations == 1);
}

TEST_CASE("numerical blow-up aborts with the last valid iterate") {
    std::mt19937_64 rng(86);
    // R degenerates to a non-SPD matrix right at theta0.
    CovParam param = CovParam::custom(
        1, 1, 1, [](const Vec&) { return Mat(Mat::Zero(1, 1)); },
        [](const Vec&, int) { return Mat(Mat::Zero(1, 1)); },
        [](const Vec&, int) { return Mat(0.1 * Mat::Identity(1, 1)); },
        [](const Vec&, int, int) { return Mat(Mat::Zero(1, 1)); });
    SystemModel model = SystemModel::time_invariant(
        scalar_mat(0.9), scalar_mat(0.1), scalar_mat(0.0), scalar_vec(0.0), scalar_mat(1.0), 4);
    std::vector<Vec> y(4, scalar_vec(0.0));
    Vec theta0(1);
    theta0 << 2.0;
    CalibrationConfig cfg;
    CalibrationReport rep = calibrate(model, SupervisorySpec::none(), y, param, theta0, cfg);
    CHECK(rep.aborted);
    CHECK(rep.theta_hat[0] == 2.0);
    CHECK(!rep.note.empty());
}

TEST_CASE("config validation") {
    CalibrationConfig cfg;
    cfg.itermax = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.itermax = 5;
    cfg.eta0 = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("test-set evaluation orders filters sensibly") {
    SimConfig cfg;
    cfg.seed = 9;
    Trajectory test = generate_trajectory(cfg, mix_seed(cfg.seed, 2), 300);
    std::vector<Vec> y = generate_primary(test.states, cfg.r_true(), mix_seed(cfg.seed, 3));
    SystemModel model = cv_model(cfg, 300, test.states[0]);
    model.u = test.inputs;
    std::vector<Vec> truth(test.states.begin() + 1, test.states.end());
    const std::vector<int> pos{0, 1, 2};
    const Mat fixed_q = cfg.q * Mat::Identity(6, 6);

    // theta matching the true R: Cholesky coordinates from its factor
    CovParam chol = CovParam::fixed_q_vary_r(CovKind::Cholesky, 3, fixed_q);
    Mat l_true = Eigen::LLT<Mat>(cfg.r_true()).matrixL();
    Vec theta_true(6);
    theta_true << std::log(l_true(0, 0)), std::log(l_true(1, 1)), std::log(l_true(2, 2)),
        l_true(1, 0), l_true(2, 0), l_true(2, 1);
    REQUIRE(chol.eval_R(theta_true).isApprox(cfg.r_true(), 1e-12));

    const double tuned = evaluate(model, theta_true, chol, truth, y, pos);

    double raw = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        raw += (y[k] - truth[k].head(3)).squaredNorm();
    }
    raw = std::sqrt(raw / y.size());
    CHECK(tuned < raw);

    // near-infinite R degrades toward dead reckoning
    CovParam iso = CovParam::fixed_q_vary_r(CovKind::Isotropic, 3, fixed_q);
    Vec big(1);
    big << std::log(1e6);
    const double ignore_meas = evaluate(model, big, iso, truth, y, pos);
    CHECK(ignore_meas > 2.0 * tuned);
}
