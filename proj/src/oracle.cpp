#include "kfcal/oracle.hpp"

#include <cmath>
#include <string>

#include "kfcal/filter.hpp"  // kSupervisoryJitter
#include "kfcal/linalg.hpp"

namespace kfcal {

double joint_nll(const SystemModel& model, const SupervisorySpec& spec,
                 const std::vector<Vec>& y_o, const CovParam& param,
                 const Vec& theta) {
    model.validate();
    const int n = model.horizon();
    const int d = model.state_dim();
    const int m = model.meas_dim();
    // Unlike the filter, the dense assembly does not care about index order,
    // so only bounds and shapes are checked here.
    for (int i : spec.indices) {
        if (i < 1 || i > n) throw ModelError("supervisory index outside [1, N]");
    }
    if (spec.Hs.cols() != static_cast<int>(spec.indices.size()) * d ||
        spec.Hs.rows() != spec.ys.size()) {
        throw ModelError("supervisory spec dimensions inconsistent");
    }
    if (static_cast<int>(y_o.size()) != n) {
        throw ModelError("measurement sequence length does not match the horizon");
    }
    const int s_dim = spec.obs_dim();
    const int state_stack = n * d;
    const int meas_stack = n * m + s_dim;
    if (state_stack > kOracleMaxStackedDim || meas_stack > kOracleMaxStackedDim) {
        throw OracleScaleError("stacked dimension " +
                               std::to_string(std::max(state_stack, meas_stack)) +
                               " exceeds the dense-oracle guard of " +
                               std::to_string(kOracleMaxStackedDim));
    }

    // Joint distribution of (x_1, ..., x_N), built one step at a time:
    // cov(x_k, x_i) = F_k cov(x_{k-1}, x_i) for i < k.
    Vec mu = Vec::Zero(state_stack);
    Mat sigma = Mat::Zero(state_stack, state_stack);
    Vec prev_mean = model.x0;
    for (int k = 1; k <= n; ++k) {
        const int row = (k - 1) * d;
        const Mat& F = model.F[k - 1];
        const Mat Q = param.eval_Q(theta, k);
        prev_mean = F * prev_mean + model.B[k - 1] * model.u[k - 1];
        mu.segment(row, d) = prev_mean;
        Mat prev_cov = (k == 1) ? model.P0 : Mat(sigma.block(row - d, row - d, d, d));
        sigma.block(row, row, d, d) = F * prev_cov * F.transpose() + Q;
        for (int i = 1; i < k; ++i) {
            const int col = (i - 1) * d;
            Mat cross = F * sigma.block(row - d, col, d, d);
            sigma.block(row, col, d, d) = cross;
            sigma.block(col, row, d, d) = cross.transpose();
        }
    }
    symmetrize(sigma);

    // Measurement stack z = A x + noise, noise = blkdiag(R, ..., R, Psi).
    const Mat R = param.eval_R(theta);
    Mat A = Mat::Zero(meas_stack, state_stack);
    Mat noise = Mat::Zero(meas_stack, meas_stack);
    Vec z(meas_stack);
    for (int k = 1; k <= n; ++k) {
        A.block((k - 1) * m, (k - 1) * d, m, d) = model.H[k - 1];
        noise.block((k - 1) * m, (k - 1) * m, m, m) = R;
        z.segment((k - 1) * m, m) = y_o[k - 1];
    }
    if (s_dim > 0) {
        for (std::size_t t = 0; t < spec.indices.size(); ++t) {
            const int col = (spec.indices[t] - 1) * d;
            A.block(n * m, col, s_dim, d) = spec.Hs.middleCols(t * d, d);
        }
        // The filter adds a fixed jitter to the supervisory innovation
        // covariance; the equivalent joint model inflates Psi by the same amount.
        noise.block(n * m, n * m, s_dim, s_dim) =
            spec.Psi + kSupervisoryJitter * Mat::Identity(s_dim, s_dim);
        z.segment(n * m, s_dim) = spec.ys;
    }

    Mat cov_z = A * sigma * A.transpose() + noise;
    symmetrize(cov_z);
    Mat L = chol_factor(cov_z, "joint measurement covariance");
    Vec resid = z - A * mu;
    Vec w = L.triangularView<Eigen::Lower>().solve(resid);
    return 0.5 * chol_logdet(L) + 0.5 * w.squaredNorm() + 0.5 * meas_stack * kLog2Pi;
}

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& theta,
                double h) {
    if (!(h > 0.0)) throw ParamError("finite-difference step must be positive");
    const int p = static_cast<int>(theta.size());
    Vec g(p);
    for (int j = 0; j < p; ++j) {
        Vec tp = theta, tm = theta;
        tp[j] += h;
        tm[j] -= h;
        const double fp = f(tp), fm = f(tm);
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericalError("finite difference hit a non-finite loss at coordinate " +
                                 std::to_string(j));
        }
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace kfcal
