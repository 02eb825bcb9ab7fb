#include "kfcal/grad_forward.hpp"

#include <utility>

#include "kfcal/linalg.hpp"

namespace kfcal {

FilterStepView::FilterStepView(const AugmentedBelief& prior_, const Mat& H_,
                               const Mat& S_L_, const Mat& K_, const Vec& r_)
    : prior(prior_), H(H_), S_L(S_L_), K(K_), r(r_) {
    HPbar = H * prior.P.topRows(prior.d);
}

void sens_predict(SensCoord& s, const Mat& F, const Mat* dQ) {
    const int d = static_cast<int>(F.rows());
    const int D = static_cast<int>(s.dX.size());
    const int tail = D - d;
    s.dX.head(d) = (F * s.dX.head(d)).eval();
    Mat top = F * s.dP.topLeftCorner(d, d) * F.transpose();
    if (dQ) top += *dQ;
    if (tail > 0) {
        Mat cross = F * s.dP.topRightCorner(d, tail);
        s.dP.topRightCorner(d, tail) = cross;
        s.dP.bottomLeftCorner(tail, d) = cross.transpose();
    }
    s.dP.topLeftCorner(d, d) = top;
    symmetrize(s.dP);
}

void sens_update(SensCoord& s, const FilterStepView& q, const Mat* dR,
                 Vec& dr, Mat& dS) {
    const int d = q.prior.d;
    dr = -(q.H * s.dX.head(d));
    dS = q.H * s.dP.topLeftCorner(d, d) * q.H.transpose();
    if (dR) dS += *dR;
    symmetrize(dS);
    // dK = (dP H0' - K dS) S^-1
    Mat M = s.dP.leftCols(d) * q.H.transpose() - q.K * dS;
    Mat dK = chol_solve(q.S_L, Mat(M.transpose())).transpose();
    s.dX += dK * q.r + q.K * dr;
    // dPcheck = dP - K (H0 dP) - dK (H0 Pbar)
    Mat HdP = q.H * s.dP.topRows(d);
    s.dP.noalias() -= q.K * HdP;
    s.dP.noalias() -= dK * q.HPbar;
    symmetrize(s.dP);
}

void sens_append(SensCoord& s, int d) {
    const int D = static_cast<int>(s.dX.size());
    Vec dX2(D + d);
    dX2 << s.dX, s.dX.head(d);
    Mat dP2(D + d, D + d);
    dP2.topLeftCorner(D, D) = s.dP;
    dP2.topRightCorner(D, d) = s.dP.leftCols(d);
    dP2.bottomLeftCorner(d, D) = s.dP.topRows(d);
    dP2.bottomRightCorner(d, d) = s.dP.topLeftCorner(d, d);
    s.dX = std::move(dX2);
    s.dP = std::move(dP2);
}

double primary_grad_step(const Vec& r, const Mat& S_L, const Vec& dr, const Mat& dS) {
    Vec sinv_r = chol_solve(S_L, r);
    Mat sinv_dS = chol_solve(S_L, dS);
    return 0.5 * sinv_dS.trace() + dr.dot(sinv_r) - 0.5 * sinv_r.dot(dS * sinv_r);
}

double supervisory_grad(const Vec& v, const Mat& C_L, const Vec& dXs,
                        const Mat& dPs, const Mat& Hs) {
    if (v.size() == 0) return 0.0;
    Vec dv = -(Hs * dXs);
    Mat dC = Hs * dPs * Hs.transpose();
    Vec cinv_v = chol_solve(C_L, v);
    Mat cinv_dC = chol_solve(C_L, dC);
    return 0.5 * cinv_dC.trace() + dv.dot(cinv_v) - 0.5 * cinv_v.dot(dC * cinv_v);
}

GradientResult forward_gradient(const SystemModel& model, const SupervisorySpec& spec,
                                const std::vector<Vec>& y_o, const CovParam& param,
                                const Vec& theta, const LossWeights& weights) {
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
    const int p = param.dim();

    const Mat R = param.eval_R(theta);
    std::vector<Mat> dR(p);
    std::vector<bool> dR_zero(p);
    for (int j = 0; j < p; ++j) {
        dR[j] = param.dR_dtheta(theta, j);
        dR_zero[j] = dR[j].isZero(0.0);
    }
    const bool const_q = param.constant_q();

    GradientResult res;
    res.grad = Vec::Zero(p);
    AugmentedBelief b = make_initial_belief(model);
    SensitivityState sens(p);
    for (auto& s : sens) {
        s.dX = Vec::Zero(d);
        s.dP = Mat::Zero(d, d);
    }
    res.loss.per_step.reserve(n);

    Vec dr;
    Mat dS;
    const Mat q_const = const_q ? param.eval_Q(theta, 1) : Mat();
    Mat q_step;
    for (int k = 1; k <= n; ++k) {
        if (!const_q) q_step = param.eval_Q(theta, k);
        const Mat& Q = const_q ? q_const : q_step;
        b = predict(std::move(b), model.F[k - 1], model.B[k - 1], model.u[k - 1], Q);
        for (int j = 0; j < p; ++j) {
            if (const_q) {
                sens_predict(sens[j], model.F[k - 1], nullptr);
            } else {
                const Mat dQ = param.dQ_dtheta(theta, j, k);
                sens_predict(sens[j], model.F[k - 1], &dQ);
            }
        }

        AugmentedBelief prior = b;  // sensitivity updates need Pbar
        UpdateResult ur = update(std::move(b), model.H[k - 1], R, y_o[k - 1], k);
        b = std::move(ur.posterior);
        const double lk = primary_loss_step(ur.r, ur.S_L);
        res.loss.ell_o += lk;
        res.loss.per_step.push_back(lk);

        FilterStepView view(prior, model.H[k - 1], ur.S_L, ur.K, ur.r);
        for (int j = 0; j < p; ++j) {
            sens_update(sens[j], view, dR_zero[j] ? nullptr : &dR[j], dr, dS);
            res.grad[j] += weights.w_o * primary_grad_step(ur.r, ur.S_L, dr, dS);
        }

        const int dim_before = b.dim();
        b = maybe_append(std::move(b), k, spec);
        if (b.dim() != dim_before) {
            for (int j = 0; j < p; ++j) sens_append(sens[j], d);
        }
    }

    const int s = b.dim() - d;
    SupervisoryLossResult sl =
        supervisory_loss(b.X.tail(s), b.P.bottomRightCorner(s, s), spec);
    res.loss.ell_s = sl.ell_s;
    if (sl.v.size() > 0) {
        for (int j = 0; j < p; ++j) {
            res.grad[j] += weights.w_s *
                           supervisory_grad(sl.v, sl.C_L, sens[j].dX.tail(s),
                                            sens[j].dP.bottomRightCorner(s, s), spec.Hs);
        }
    }
    res.loss.v = std::move(sl.v);
    res.loss.C = std::move(sl.C);
    res.loss.C_L = std::move(sl.C_L);
    res.loss.total = res.loss.ell_o + res.loss.ell_s;
    return res;
}

}  // namespace kfcal
