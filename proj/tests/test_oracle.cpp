#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "kfcal/filter.hpp"
#include "kfcal/linalg.hpp"
#include "kfcal/oracle.hpp"
#include "kfcal/simlab.hpp"
#include "test_support.hpp"

using namespace kfcal;
using namespace kfcal::test;

TEST_CASE("one-step joint likelihood is the innovation likelihood") {
    std::mt19937_64 rng(31);
    Mat f = scalar_mat(0.8), b = scalar_mat(0.5), h = scalar_mat(1.3);
    SystemModel model = SystemModel::time_invariant(f, b, h, scalar_vec(0.4),
                                                    scalar_mat(0.9), 1);
    model.u[0] = scalar_vec(1.0);
    CovParam param = CovParam::fixed_q_vary_r(CovKind::Isotropic, 1, scalar_mat(0.2));
    Vec theta = random_vec(rng, 1, 0.5);
    std::vector<Vec> y{random_vec(rng, 1, 1.0)};

    FilterResult fr = run_filter(model, SupervisorySpec::none(), y, param, theta);
    const double nll = joint_nll(model, SupervisorySpec::none(), y, param, theta);
    CHECK(nll == doctest::Approx(fr.loss.per_step[0]).epsilon(1e-12));
}

TEST_CASE("chain-rule identity without supervision") {
    std::mt19937_64 rng(32);
    for (int rep = 0; rep < 10; ++rep) {
        Instance inst = random_instance(rng, {.max_sup = 0});
        FilterResult fr = run_filter(inst.model, inst.spec, inst.y, inst.param, inst.theta);
        const double sum =
            std::accumulate(fr.loss.per_step.begin(), fr.loss.per_step.end(), 0.0);
        const double oracle = joint_nll(inst.model, inst.spec, inst.y, inst.param, inst.theta);
        CHECK(oracle == doctest::Approx(sum).epsilon(1e-10));
    }
}

TEST_CASE("supervisory index order does not matter") {
    std::mt19937_64 rng(33);
    for (int rep = 0; rep < 10; ++rep) {
        Instance inst = random_instance(rng, {.min_d = 2, .max_d = 3, .min_n = 4,
                                              .max_n = 7, .max_sup = 3});
        if (inst.spec.indices.size() < 2) continue;
        const int d = inst.model.state_dim();
        const int l = static_cast<int>(inst.spec.indices.size());

        SupervisorySpec shuffled = inst.spec;
        std::vector<int> perm(l);
        for (int i = 0; i < l; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int t = 0; t < l; ++t) {
            shuffled.indices[t] = inst.spec.indices[perm[t]];
            shuffled.Hs.middleCols(t * d, d) = inst.spec.Hs.middleCols(perm[t] * d, d);
        }
        const double a = joint_nll(inst.model, inst.spec, inst.y, inst.param, inst.theta);
        const double b = joint_nll(inst.model, shuffled, inst.y, inst.param, inst.theta);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
}

TEST_CASE("doubling Psi only touches the supervisory block") {
    std::mt19937_64 rng(34);
    Instance inst;
    do {
        inst = random_instance(rng, {.min_n = 4, .max_n = 8, .max_sup = 2,
                                     .allow_zero_psi = false});
    } while (inst.spec.empty());
    const double base = joint_nll(inst.model, inst.spec, inst.y, inst.param, inst.theta);
    const double base_o =
        joint_nll(inst.model, SupervisorySpec::none(), inst.y, inst.param, inst.theta);
    SupervisorySpec doubled = inst.spec;
    doubled.Psi *= 2.0;
    const double two = joint_nll(inst.model, doubled, inst.y, inst.param, inst.theta);
    const double two_o =
        joint_nll(inst.model, SupervisorySpec::none(), inst.y, inst.param, inst.theta);
    CHECK(base_o == two_o);
    CHECK(base != two);  // the ys block did change
}

TEST_CASE("scale guard") {
    SimConfig cfg;
    Trajectory traj = generate_trajectory(cfg, 3, 100);
    SystemModel model = cv_model(cfg, 100, traj.states[0]);
    model.u = traj.inputs;
    std::vector<Vec> y = generate_primary(traj.states, cfg.r_true(), 4);
    CovParam param = CovParam::fixed_q_vary_r(CovKind::Isotropic, 3,
                                              cfg.q * Mat::Identity(6, 6));
    CHECK_THROWS_AS(joint_nll(model, SupervisorySpec::none(), y, param, Vec::Zero(1)),
                    OracleScaleError);
}

TEST_CASE("finite differences of a quadratic are exact") {
    std::mt19937_64 rng(35);
    auto f = [](const Vec& th) { return 0.5 * th.squaredNorm(); };
    for (int rep = 0; rep < 5; ++rep) {
        Vec theta(3);
        for (int i = 0; i < 3; ++i) theta[i] = urand(rng, -0.5, 0.5);
        Vec g = fd_gradient(f, theta, 1e-5);
        CHECK((g - theta).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("finite differences report non-finite losses") {
    auto f = [](const Vec& th) {
        return th[0] > 0.05 ? std::numeric_limits<double>::quiet_NaN() : th[0];
    };
    CHECK_THROWS_AS(fd_gradient(f, Vec::Zero(1), 0.1), NumericalError);
    CHECK_THROWS_AS(fd_gradient(f, Vec::Zero(1), 0.0), ParamError);
}

TEST_CASE("step-size sweep sits on a plateau") {
    std::mt19937_64 rng(36);
    Instance inst = random_instance(rng, {.min_d = 2, .max_d = 2, .min_n = 5, .max_n = 8,
                                          .p_choices = {3}, .max_sup = 2});
    auto loss = [&](const Vec& th) {
        return run_filter(inst.model, inst.spec, inst.y, inst.param, th).loss.total;
    };
    Vec g4 = fd_gradient(loss, inst.theta, 1e-4);
    Vec g5 = fd_gradient(loss, inst.theta, 1e-5);
    Vec g6 = fd_gradient(loss, inst.theta, 1e-6);
    // All three step sizes land on the same answer; the plateau is wide.
    CHECK(max_rel_err(g4, g5, 1e-6) < 1e-3);
    CHECK(max_rel_err(g5, g6, 1e-6) < 1e-3);
}
