#include "kfcal/filter.hpp"

#include <algorithm>
#include <string>

#include "kfcal/linalg.hpp"

namespace kfcal {

AugmentedBelief make_initial_belief(const SystemModel& model) {
    AugmentedBelief b;
    b.X = model.x0;
    b.P = symmetrized(model.P0);
    b.d = model.state_dim();
    return b;
}

AugmentedBelief predict(AugmentedBelief belief, const Mat& F, const Mat& B,
                        const Vec& u, const Mat& Q) {
    const int d = belief.d;
    const int D = belief.dim();
    const int s = D - d;
    if (F.rows() != d || F.cols() != d || Q.rows() != d || Q.cols() != d ||
        B.rows() != d || B.cols() != u.size()) {
        throw ModelError("predict: step matrices inconsistent with state dimension");
    }
    // Embedded F0 = blkdiag(F, I): only the current-state rows/cols move.
    belief.X.head(d) = (F * belief.X.head(d) + B * u).eval();
    Mat top = F * belief.P.topLeftCorner(d, d) * F.transpose() + Q;
    if (s > 0) {
        Mat cross = F * belief.P.topRightCorner(d, s);
        belief.P.topRightCorner(d, s) = cross;
        belief.P.bottomLeftCorner(s, d) = cross.transpose();
    }
    belief.P.topLeftCorner(d, d) = top;
    symmetrize(belief.P);
    return belief;
}

UpdateResult update(AugmentedBelief prior, const Mat& H, const Mat& R,
                    const Vec& y, int k) {
    const int d = prior.d;
    const int m = static_cast<int>(H.rows());
    if (H.cols() != d || R.rows() != m || R.cols() != m || y.size() != m) {
        throw ModelError("update: measurement matrices inconsistent at step " +
                         std::to_string(k));
    }
    Mat PHt = prior.P.leftCols(d) * H.transpose();  // Pbar H0', D x m
    Mat S = H * PHt.topRows(d) + R;
    symmetrize(S);
    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("innovation covariance is singular at step " +
                             std::to_string(k));
    }
    Mat S_L = llt.matrixL();
    Vec r = y - H * prior.X.head(d);
    // K = Pbar H0' S^-1, via S K' = (Pbar H0')'
    Mat Kt = PHt.transpose();
    S_L.triangularView<Eigen::Lower>().solveInPlace(Kt);
    S_L.transpose().triangularView<Eigen::Upper>().solveInPlace(Kt);
    Mat K = Kt.transpose();
    prior.X += K * r;
    prior.P -= K * PHt.transpose();  // K H0 Pbar = K (Pbar H0')'
    symmetrize(prior.P);
    return {std::move(prior), std::move(r), std::move(S_L), std::move(K)};
}

AugmentedBelief maybe_append(AugmentedBelief belief, int k, const SupervisorySpec& spec) {
    if (!std::binary_search(spec.indices.begin(), spec.indices.end(), k)) {
        return belief;
    }
    if (std::find(belief.ledger.begin(), belief.ledger.end(), k) != belief.ledger.end()) {
        throw InternalError("state at step " + std::to_string(k) + " appended twice");
    }
    const int d = belief.d;
    const int D = belief.dim();
    Vec X2(D + d);
    X2 << belief.X, belief.X.head(d);
    Mat P2(D + d, D + d);
    P2.topLeftCorner(D, D) = belief.P;
    P2.topRightCorner(D, d) = belief.P.leftCols(d);
    P2.bottomLeftCorner(d, D) = belief.P.topRows(d);
    P2.bottomRightCorner(d, d) = belief.P.topLeftCorner(d, d);
    belief.X = std::move(X2);
    belief.P = std::move(P2);
    symmetrize(belief.P);
    belief.ledger.push_back(k);
    return belief;
}

double primary_loss_step(const Vec& r, const Mat& S_L) {
    const int m = static_cast<int>(r.size());
    // r' S^-1 r = ||L^-1 r||^2
    Vec w = S_L.triangularView<Eigen::Lower>().solve(r);
    return 0.5 * chol_logdet(S_L) + 0.5 * w.squaredNorm() + 0.5 * m * kLog2Pi;
}

SupervisoryLossResult supervisory_loss(const Vec& Xs, const Mat& Ps,
                                       const SupervisorySpec& spec) {
    SupervisoryLossResult out;
    if (spec.obs_dim() == 0) return out;
    if (spec.Hs.cols() != Xs.size() || Ps.rows() != Xs.size()) {
        throw ModelError("supervisory_loss: Hs inconsistent with supervised block");
    }
    out.v = spec.ys - spec.Hs * Xs;
    out.C = spec.Hs * Ps * spec.Hs.transpose() + spec.Psi;
    symmetrize(out.C);
    out.C += kSupervisoryJitter * Mat::Identity(out.C.rows(), out.C.cols());
    Eigen::LLT<Mat> llt(out.C);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("supervisory covariance is singular");
    }
    out.C_L = llt.matrixL();
    Vec w = out.C_L.triangularView<Eigen::Lower>().solve(out.v);
    out.ell_s = 0.5 * chol_logdet(out.C_L) + 0.5 * w.squaredNorm() +
                0.5 * spec.obs_dim() * kLog2Pi;
    return out;
}

FilterResult run_filter(const SystemModel& model, const SupervisorySpec& spec,
                        const std::vector<Vec>& y_o, const CovParam& param,
                        const Vec& theta, const FilterOptions& opts) {
    model.validate();
    const int n = model.horizon();
    const int d = model.state_dim();
    spec.validate(d, n);
    if (static_cast<int>(y_o.size()) != n) {
        throw ModelError("measurement sequence length does not match the horizon");
    }
    if (param.meas_dim() != model.meas_dim() || param.proc_dim() != d) {
        throw ModelError("parameterization dimensions do not match the model");
    }

    const Mat R = param.eval_R(theta);
    FilterResult res;
    res.final_belief = make_initial_belief(model);
    AugmentedBelief& b = res.final_belief;
    res.loss.per_step.reserve(n);
    if (opts.keep_trace) res.trace.steps.reserve(n);

    const bool const_q = param.constant_q();
    const Mat q_const = const_q ? param.eval_Q(theta, 1) : Mat();
    Mat q_step;
    for (int k = 1; k <= n; ++k) {
        if (!const_q) q_step = param.eval_Q(theta, k);
        const Mat& Q = const_q ? q_const : q_step;
        b = predict(std::move(b), model.F[k - 1], model.B[k - 1], model.u[k - 1], Q);
        if (opts.keep_beliefs) res.trace.priors.push_back(b);

        UpdateResult ur = update(std::move(b), model.H[k - 1], R, y_o[k - 1], k);
        b = std::move(ur.posterior);
        const double lk = primary_loss_step(ur.r, ur.S_L);
        res.loss.ell_o += lk;
        res.loss.per_step.push_back(lk);

        const int dim_before = b.dim();
        b = maybe_append(std::move(b), k, spec);
        const bool appended = b.dim() != dim_before;

        if (opts.keep_trace) {
            res.trace.steps.push_back({model.F[k - 1], model.H[k - 1],
                                       std::move(ur.K), std::move(ur.S_L),
                                       std::move(ur.r), appended});
        }
        if (opts.keep_beliefs) res.trace.posteriors.push_back(b);
    }

    const int s = b.dim() - d;
    SupervisoryLossResult sl =
        supervisory_loss(b.X.tail(s), b.P.bottomRightCorner(s, s), spec);
    res.loss.ell_s = sl.ell_s;
    res.loss.v = std::move(sl.v);
    res.loss.C = std::move(sl.C);
    res.loss.C_L = std::move(sl.C_L);
    res.loss.total = res.loss.ell_o + res.loss.ell_s;
    return res;
}

}  // namespace kfcal
