#include "kfcal/grad_reverse.hpp"

#include <string>

#include "kfcal/linalg.hpp"

namespace kfcal {

AdjointState init_adjoints(const Vec& v, const Mat& C_L, const Mat& Hs,
                           int final_dim, int state_dim, double w_s) {
    AdjointState adj{Vec::Zero(final_dim), Mat::Zero(final_dim, final_dim)};
    if (v.size() == 0 || w_s == 0.0) return adj;
    const int s = final_dim - state_dim;
    Vec cinv_v = chol_solve(C_L, v);
    Mat cinv_Hs = chol_solve(C_L, Hs);
    Vec ht_civ = Hs.transpose() * cinv_v;
    // dL/dXs = -Hs' C^-1 v; dL/dPs = 1/2 (Hs' C^-1 Hs - (Hs' C^-1 v)(...)')
    adj.dL_dX.tail(s) = -w_s * ht_civ;
    adj.dL_dP.bottomRightCorner(s, s) =
        0.5 * w_s * (Hs.transpose() * cinv_Hs - ht_civ * ht_civ.transpose());
    return adj;
}

BackwardStepResult backward_step(AdjointState& adj, const FilterStepRecord& step,
                                 const Mat& R_L, double w_o, PbarAdjointForm form) {
    const int d = static_cast<int>(step.F.rows());
    const int m = static_cast<int>(step.r.size());
    if (adj.dL_dX.size() == 0) {
        throw InternalError("backward_step called without a trace step");
    }

    // Reverse the append: contract through J' (dimension shrinks by d).
    if (step.appended) {
        const int D0 = static_cast<int>(adj.dL_dX.size()) - d;
        Vec a = adj.dL_dX.head(D0);
        a.head(d) += adj.dL_dX.tail(d);
        Mat A = adj.dL_dP.topLeftCorner(D0, D0);
        A.topRows(d) += adj.dL_dP.bottomLeftCorner(d, D0);
        A.leftCols(d) += adj.dL_dP.topRightCorner(D0, d);
        A.topLeftCorner(d, d) += adj.dL_dP.bottomRightCorner(d, d);
        adj.dL_dX = std::move(a);
        adj.dL_dP = std::move(A);
    }
    const int D = static_cast<int>(adj.dL_dX.size());
    const Vec& r = step.r;
    const Mat& K = step.K;
    const Mat& H = step.H;
    if (K.rows() != D) {
        throw InternalError("trace step dimension mismatch in backward pass");
    }

    Vec sinv_r = chol_solve(step.S_L, r);
    Mat sinv = chol_solve(step.S_L, Mat(Mat::Identity(m, m)));

    BackwardStepResult out;
    // dL/dR from the measurement-update reversal plus this step's loss term.
    Vec g = K.transpose() * adj.dL_dX;  // K' dL/dXcheck
    out.dL_dR = K.transpose() * adj.dL_dP * K -
                0.5 * g * sinv_r.transpose() - 0.5 * sinv_r * g.transpose() +
                w_o * (0.5 * sinv - 0.5 * sinv_r * sinv_r.transpose());

    // dL/dXbar = (I - K H0)' dL/dXcheck - w H0' S^-1 r
    Vec a_bar = adj.dL_dX;
    a_bar.head(d) -= H.transpose() * g;
    a_bar.head(d) -= w_o * (H.transpose() * sinv_r);

    // dL/dPbar = (I - K H0)' [dL/dPcheck + sym(1/2 dL/dXcheck r' Z H0)] (I - K H0)
    //            + w/2 (H0' S^-1 H0 - H0' S^-1 r r' S^-1 H0),  Z = R^-1 (or S^-1).
    Vec z_meas = (form == PbarAdjointForm::RInverse) ? chol_solve(R_L, r) : sinv_r;
    Vec z = Vec::Zero(D);
    z.head(d) = H.transpose() * z_meas;
    Mat B = adj.dL_dP + 0.5 * adj.dL_dX * z.transpose() + 0.5 * z * adj.dL_dX.transpose();
    Mat KtB = K.transpose() * B;
    B.topRows(d) -= H.transpose() * KtB;         // (I - K H0)' B
    Mat BK = B * K;
    B.leftCols(d) -= BK * H;                     // ... (I - K H0)
    Vec hs = H.transpose() * sinv_r;
    B.topLeftCorner(d, d) +=
        w_o * 0.5 * (H.transpose() * chol_solve(step.S_L, Mat(H)) - hs * hs.transpose());

    // dL/dQ = top-left block of dL/dPbar (Q enters only there).
    out.dL_dQ = B.topLeftCorner(d, d);

    // Reverse the dynamics: dL/dXhat_{k-1} = F0' dL/dXbar, dL/dPhat_{k-1} = F0' dL/dPbar F0.
    a_bar.head(d) = (step.F.transpose() * a_bar.head(d)).eval();
    B.topRows(d) = (step.F.transpose() * B.topRows(d)).eval();
    B.leftCols(d) = (B.leftCols(d) * step.F).eval();

    adj.dL_dX = std::move(a_bar);
    adj.dL_dP = std::move(B);
    return out;
}

Vec chain_to_theta(const std::vector<Mat>& dL_dR, const std::vector<Mat>& dL_dQ,
                   const CovParam& param, const Vec& theta) {
    const int n = static_cast<int>(dL_dR.size());
    if (static_cast<int>(dL_dQ.size()) != n) {
        throw InternalError("adjoint sequences have different lengths");
    }
    const int p = param.dim();
    Vec grad = Vec::Zero(p);

    // R is time-invariant under the parameterization contract, so the R chain
    // collapses to a single contraction with the accumulated adjoint.
    Mat r_sum = Mat::Zero(param.meas_dim(), param.meas_dim());
    for (const Mat& a : dL_dR) r_sum += symmetrized(a);
    for (int j = 0; j < p; ++j) {
        grad[j] = frobenius_inner(r_sum, param.dR_dtheta(theta, j));
    }
    if (!param.constant_q()) {
        for (int k = 1; k <= n; ++k) {
            Mat q_sym = symmetrized(dL_dQ[k - 1]);
            for (int j = 0; j < p; ++j) {
                grad[j] += frobenius_inner(q_sym, param.dQ_dtheta(theta, j, k));
            }
        }
    }
    return grad;
}

GradientResult reverse_gradient(const SystemModel& model, const SupervisorySpec& spec,
                                const std::vector<Vec>& y_o, const CovParam& param,
                                const Vec& theta, const LossWeights& weights,
                                PbarAdjointForm form) {
    FilterResult fr = run_filter(model, spec, y_o, param, theta, {.keep_trace = true});
    const int n = model.horizon();
    const int d = model.state_dim();

    const Mat R = param.eval_R(theta);
    const Mat R_L = chol_factor(R, "measurement covariance R(theta)");

    AdjointState adj = init_adjoints(fr.loss.v, fr.loss.C_L, spec.Hs,
                                     fr.final_belief.dim(), d, weights.w_s);
    std::vector<Mat> dR(n), dQ(n);
    for (int k = n; k >= 1; --k) {
        BackwardStepResult st = backward_step(adj, fr.trace.steps[k - 1], R_L,
                                              weights.w_o, form);
        dR[k - 1] = std::move(st.dL_dR);
        dQ[k - 1] = std::move(st.dL_dQ);
    }

    GradientResult res;
    res.loss = std::move(fr.loss);
    res.grad = chain_to_theta(dR, dQ, param, theta);
    return res;
}

}  // namespace kfcal
