#pragma once

#include <vector>

#include "kfcal/model.hpp"
#include "kfcal/params.hpp"

namespace kfcal {

// Augmented-state Kalman filter. One step k embeds the step matrices as
//   F0 = blkdiag(F_k, I), B0 = [B_k; 0], Q0 = blkdiag(Q_k, 0), H0 = [H_k 0]
// and runs
//   predict:  Xbar = F0 Xhat + B0 u,  Pbar = F0 Phat F0' + Q0
//   update:   r = y - H0 Xbar, S = H_k Pbar_oo H_k' + R,
//             K = Pbar H0' S^-1, Xcheck = Xbar + K r, Pcheck = Pbar - K H0 Pbar
//   append:   Xhat = [Xcheck; xcheck], Phat the matching duplication, when k
//             is a supervised index.
// The block structure is exploited directly; the embedded matrices are never
// formed. Every covariance is symmetrized after assembly.

AugmentedBelief make_initial_belief(const SystemModel& model);

AugmentedBelief predict(AugmentedBelief belief, const Mat& F, const Mat& B,
                        const Vec& u, const Mat& Q);

struct UpdateResult {
    AugmentedBelief posterior;
    Vec r;
    Mat S_L;  // lower Cholesky factor of S
    Mat K;
};

// Throws NumericalError naming step k when S is not SPD.
UpdateResult update(AugmentedBelief prior, const Mat& H, const Mat& R,
                    const Vec& y, int k);

// Appends a copy of the current state when k is a supervised index;
// otherwise returns the belief unchanged.
AugmentedBelief maybe_append(AugmentedBelief belief, int k, const SupervisorySpec& spec);

// l_k = 1/2 log|S| + 1/2 r' S^-1 r + (m/2) log(2 pi)
double primary_loss_step(const Vec& r, const Mat& S_L);

struct SupervisoryLossResult {
    double ell_s = 0.0;
    Vec v;
    Mat C;
    Mat C_L;
};

// ell_s = 1/2 log|C| + 1/2 v' C^-1 v + (n/2) log(2 pi) with
// v = ys - Hs Xs, C = Hs Ps Hs' + Psi + jitter. The jitter (1e-10 I) keeps C
// factorizable in the Psi = 0 limit and is part of the effective noise model.
inline constexpr double kSupervisoryJitter = 1e-10;
SupervisoryLossResult supervisory_loss(const Vec& Xs, const Mat& Ps,
                                       const SupervisorySpec& spec);

struct FilterOptions {
    bool keep_trace = false;
    bool keep_beliefs = false;
};

struct FilterResult {
    LossBreakdown loss;
    FilterTrace trace;
    AugmentedBelief final_belief;
};

FilterResult run_filter(const SystemModel& model, const SupervisorySpec& spec,
                        const std::vector<Vec>& y_o, const CovParam& param,
                        const Vec& theta, const FilterOptions& opts = {});

}  // namespace kfcal
