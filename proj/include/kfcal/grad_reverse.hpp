#pragma once

#include <vector>

#include "kfcal/filter.hpp"
#include "kfcal/grad_forward.hpp"  // GradientResult

namespace kfcal {

// Reverse-mode differentiation: a traced forward pass followed by a backward
// sweep that propagates loss adjoints of the belief mean and covariance and
// emits per-step adjoints of R_k and Q_k, chained into theta at the end.
// Memory is O(N D^2) for the retained trace.

struct AdjointState {
    Vec dL_dX;
    Mat dL_dP;
};

// The mean-adjoint middle term of the covariance-adjoint recursion can be
// written against R_k^-1 or S_k^-1. The two disagree; RInverse is the form
// consistent with finite differences (see tests) and is the default.
// SInverse is kept as an explicitly wrong alternative for negative controls.
enum class PbarAdjointForm { RInverse, SInverse };

// Adjoint of the supervisory loss with respect to the final belief, lifted
// from the supervised block through G = [0 I]. Zero when the spec is empty.
AdjointState init_adjoints(const Vec& v, const Mat& C_L, const Mat& Hs,
                           int final_dim, int state_dim, double w_s = 1.0);

struct BackwardStepResult {
    Mat dL_dR;
    Mat dL_dQ;
};

// Reverses one filter step: append contraction, update reversal with the
// per-step loss sources, R/Q adjoint extraction, dynamics reversal.
// R_L is the lower Cholesky factor of R (used by the RInverse form).
BackwardStepResult backward_step(AdjointState& adj, const FilterStepRecord& step,
                                 const Mat& R_L, double w_o = 1.0,
                                 PbarAdjointForm form = PbarAdjointForm::RInverse);

// grad_j = sum_k <dL/dR_k, dR/dtheta_j>_F + <dL/dQ_k, dQ_k/dtheta_j>_F,
// adjoints symmetrized before contraction.
Vec chain_to_theta(const std::vector<Mat>& dL_dR, const std::vector<Mat>& dL_dQ,
                   const CovParam& param, const Vec& theta);

GradientResult reverse_gradient(const SystemModel& model, const SupervisorySpec& spec,
                                const std::vector<Vec>& y_o, const CovParam& param,
                                const Vec& theta, const LossWeights& weights = {},
                                PbarAdjointForm form = PbarAdjointForm::RInverse);

}  // namespace kfcal
