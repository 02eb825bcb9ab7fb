#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kfcal/params.hpp"
#include "test_support.hpp"

using namespace kfcal;
using namespace kfcal::test;

namespace {

// Central finite difference of a matrix-valued map, entrywise.
template <typename Fn>
Mat fd_matrix(Fn&& f, const Vec& theta, int j, double h) {
    Vec tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    return (f(tp) - f(tm)) / (2.0 * h);
}

}  // namespace

TEST_CASE("built-in kinds at neutral theta") {
    CHECK(CovParam::isotropic(3, 3).eval_R(Vec::Zero(1)).isApprox(Mat::Identity(3, 3)));
    CHECK(CovParam::cholesky(3, 3).eval_R(Vec::Zero(6)).isApprox(Mat::Identity(3, 3)));

    // diag(0.9^2, 1.3^2, 2.2^2)
    Vec th(3);
    th << std::log(0.81), std::log(1.69), std::log(4.84);
    Mat r = CovParam::diagonal(3, 3).eval_R(th);
    CHECK(r(0, 0) == doctest::Approx(0.81).epsilon(1e-12));
    CHECK(r(1, 1) == doctest::Approx(1.69).epsilon(1e-12));
    CHECK(r(2, 2) == doctest::Approx(4.84).epsilon(1e-12));
    CHECK(r(0, 1) == 0.0);
}

TEST_CASE("coordinate dimensions per kind") {
    CHECK(CovParam::isotropic(3, 6).dim() == 1);
    CHECK(CovParam::diagonal(3, 6).dim() == 3);
    CHECK(CovParam::cholesky(3, 6).dim() == 6);
    CHECK(CovParam::cholesky(4, 4).dim() == 10);
    CHECK(CovParam::fixed_q_vary_r(CovKind::Cholesky, 3, Mat::Identity(6, 6)).dim() == 6);
}

TEST_CASE("argument errors") {
    CovParam p = CovParam::diagonal(3, 3);
    CHECK_THROWS_AS(p.eval_R(Vec::Zero(2)), ParamError);
    CHECK_THROWS_AS(p.dR_dtheta(Vec::Zero(3), 3), ParamError);
    CHECK_THROWS_AS(p.dR_dtheta(Vec::Zero(3), -1), ParamError);
    CHECK_THROWS_AS(CovParam::fixed_q_vary_r(CovKind::Custom, 3, Mat::Identity(3, 3)),
                    ParamError);
}

TEST_CASE("fixed-Q kind ignores theta in Q") {
    const Mat q = 0.01 * Mat::Identity(6, 6);
    CovParam p = CovParam::fixed_q_vary_r(CovKind::Diagonal, 3, q);
    Vec th(3);
    th << 1.0, -2.0, 0.5;
    CHECK(p.eval_Q(th, 1).isApprox(q));
    CHECK(p.eval_Q(Vec::Zero(3), 7).isApprox(q));
    for (int j = 0; j < 3; ++j) CHECK(p.dQ_dtheta(th, j, 2).isZero(0.0));
}

TEST_CASE("custom kind") {
    auto eye_q = [](const Vec& th, int) { return Mat(std::exp(th[0]) * Mat::Identity(2, 2)); };
    auto d_eye_q = [](const Vec& th, int j, int) -> Mat {
        if (j != 0) return Mat::Zero(2, 2);
        return std::exp(th[0]) * Mat::Identity(2, 2);
    };
    CovParam p = CovParam::custom(
        1, 2, 2, [](const Vec& th) { return Mat(std::exp(th[0]) * Mat::Identity(2, 2)); },
        [](const Vec& th, int) { return Mat(std::exp(th[0]) * Mat::Identity(2, 2)); },
        eye_q, d_eye_q);
    Vec th(1);
    th << std::log(2.0);
    CHECK(p.eval_Q(th, 1).isApprox(2.0 * Mat::Identity(2, 2)));
    CHECK(p.dQ_dtheta(Vec::Zero(1), 0, 1).isApprox(Mat::Identity(2, 2)));
}

TEST_CASE("analytic derivatives of single coordinates") {
    Mat d0 = CovParam::isotropic(3, 3).dR_dtheta(Vec::Zero(1), 0);
    CHECK(d0.isApprox(Mat::Identity(3, 3)));

    Mat d1 = CovParam::diagonal(3, 3).dR_dtheta(Vec::Zero(3), 1);
    Mat want = Mat::Zero(3, 3);
    want(1, 1) = 1.0;
    CHECK(d1.isApprox(want));
}

TEST_CASE("derivatives match finite differences") {
    std::mt19937_64 rng(71);
    for (CovKind kind : {CovKind::Isotropic, CovKind::Diagonal, CovKind::Cholesky}) {
        CovParam p = kind == CovKind::Isotropic ? CovParam::isotropic(3, 3)
                     : kind == CovKind::Diagonal ? CovParam::diagonal(3, 3)
                                                 : CovParam::cholesky(3, 3);
        for (int rep = 0; rep < 20; ++rep) {
            Vec th(p.dim());
            for (int i = 0; i < p.dim(); ++i) th[i] = urand(rng, -2.0, 2.0);
            for (int j = 0; j < p.dim(); ++j) {
                Mat analytic = p.dR_dtheta(th, j);
                Mat fd = fd_matrix([&](const Vec& t) { return p.eval_R(t); }, th, j, 1e-6);
                const double denom = std::max(analytic.norm(), 1e-9);
                CHECK((analytic - fd).norm() / denom < 1e-6);
            }
        }
    }
}

TEST_CASE("custom Q derivative matches finite differences") {
    std::mt19937_64 rng(72);
    const Mat q_base = random_spd(rng, 2, 0.2);
    CovParam p = make_instance_param(rng, CovKind::Diagonal, 3, 2, q_base, true);
    for (int rep = 0; rep < 10; ++rep) {
        Vec th = random_vec(rng, p.dim(), 0.8);
        for (int j = 0; j < p.dim(); ++j) {
            for (int k : {1, 4}) {
                Mat analytic = p.dQ_dtheta(th, j, k);
                Mat fd = fd_matrix([&](const Vec& t) { return p.eval_Q(t, k); }, th, j, 1e-6);
                CHECK((analytic - fd).norm() <= 1e-6 * std::max(1.0, analytic.norm()));
            }
        }
    }
}

TEST_CASE("R stays positive definite over the admissible range") {
    std::mt19937_64 rng(73);
    for (CovKind kind : {CovKind::Isotropic, CovKind::Diagonal, CovKind::Cholesky}) {
        CovParam p = kind == CovKind::Isotropic ? CovParam::isotropic(3, 3)
                     : kind == CovKind::Diagonal ? CovParam::diagonal(3, 3)
                                                 : CovParam::cholesky(3, 3);
        for (int rep = 0; rep < 50; ++rep) {
            Vec th(p.dim());
            for (int i = 0; i < p.dim(); ++i) th[i] = urand(rng, -4.0, 4.0);
            Mat r = p.eval_R(th);
            CHECK((r - r.transpose()).norm() == 0.0);
            Eigen::SelfAdjointEigenSolver<Mat> es(r);
            CHECK(es.eigenvalues().minCoeff() > 0.0);
        }
        // At the clamp extremes the product underflows double roundoff, so
        // only symmetry and PSD-within-roundoff are checkable numerically.
        for (int rep = 0; rep < 20; ++rep) {
            Vec th(p.dim());
            for (int i = 0; i < p.dim(); ++i) th[i] = urand(rng, -20.0, 20.0);
            Mat r = p.eval_R(th);
            Eigen::SelfAdjointEigenSolver<Mat> es(r);
            CHECK(es.eigenvalues().minCoeff() >= -1e-9 * std::max(1.0, r.norm()));
        }
    }
}

TEST_CASE("exponent shifts scale isotropic and diagonal kinds") {
    std::mt19937_64 rng(74);
    CovParam iso = CovParam::isotropic(3, 3);
    CovParam diag = CovParam::diagonal(3, 3);
    for (int rep = 0; rep < 20; ++rep) {
        const double c = urand(rng, -1.0, 1.0);
        Vec th1 = random_vec(rng, 1, 1.0);
        CHECK(iso.eval_R(Vec(th1.array() + c)).isApprox(std::exp(c) * iso.eval_R(th1), 1e-12));

        Vec th3 = random_vec(rng, 3, 1.0);
        Vec shift = Vec::Zero(3);
        const int j = irand(rng, 0, 2);
        shift[j] = c;
        Mat lhs = diag.eval_R(th3 + shift);
        Mat rhs = diag.eval_R(th3);
        rhs(j, j) *= std::exp(c);
        CHECK(lhs.isApprox(rhs, 1e-12));
    }
}

TEST_CASE("clamp bounds the exponent and kills the derivative outside") {
    CovParam iso = CovParam::isotropic(2, 2);
    Vec over(1), at(1);
    over << 25.0;
    at << 20.0;
    CHECK(iso.eval_R(over) == iso.eval_R(at));
    CHECK(iso.dR_dtheta(over, 0).isZero(0.0));
    CHECK(!iso.dR_dtheta(at, 0).isZero(0.0));
}
