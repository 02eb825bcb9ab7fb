#pragma once

#include <vector>

#include "kfcal/filter.hpp"

namespace kfcal {

// Forward-mode differentiation: per-coordinate sensitivities (dX, dP) of the
// belief are propagated alongside the filter recursion. Only current-step
// sensitivities are kept, so memory is O(p D^2) regardless of the horizon.

struct SensCoord {
    Vec dX;
    Mat dP;
};

using SensitivityState = std::vector<SensCoord>;

// Quantities of one completed filter update shared by all coordinate
// sensitivity updates at that step. Holds references; the bound objects must
// outlive the view.
struct FilterStepView {
    const AugmentedBelief& prior;  // post-predict belief
    const Mat& H;
    const Mat& S_L;
    const Mat& K;
    const Vec& r;
    Mat HPbar;  // H0 * Pbar, m x D

    FilterStepView(const AugmentedBelief& prior_, const Mat& H_, const Mat& S_L_,
                   const Mat& K_, const Vec& r_);
};

// dX <- F0 dX, dP <- F0 dP F0' + blkdiag(dQ, 0); dQ == nullptr means zero.
void sens_predict(SensCoord& s, const Mat& F, const Mat* dQ);

// All five update sensitivity displays; dR == nullptr means zero.
// Outputs dr and dS for the loss derivative of this step.
void sens_update(SensCoord& s, const FilterStepView& q, const Mat* dR,
                 Vec& dr, Mat& dS);

// Mirrors the append duplication on (dX, dP).
void sens_append(SensCoord& s, int d);

// d l_k = 1/2 tr(S^-1 dS) + dr' S^-1 r - 1/2 r' S^-1 dS S^-1 r
double primary_grad_step(const Vec& r, const Mat& S_L, const Vec& dr, const Mat& dS);

// d ell_s with dv = -Hs dXs and dC = Hs dPs Hs'.
double supervisory_grad(const Vec& v, const Mat& C_L, const Vec& dXs,
                        const Mat& dPs, const Mat& Hs);

struct GradientResult {
    LossBreakdown loss;
    Vec grad;
};

GradientResult forward_gradient(const SystemModel& model, const SupervisorySpec& spec,
                                const std::vector<Vec>& y_o, const CovParam& param,
                                const Vec& theta, const LossWeights& weights = {});

}  // namespace kfcal
