#pragma once

#include <cstddef>
#include <vector>

#include "kfcal/types.hpp"

namespace kfcal {

// Deterministic skeleton of the linear system
//   x_k = F_k x_{k-1} + B_k u_k + w_k,   y_k = H_k x_k + v_k,   k = 1..N
// with initial belief x_0 ~ N(x0, P0). Sequences are stored 0-based:
// F[k-1] is the transition applied at step k.
struct SystemModel {
    std::vector<Mat> F;  // d x d
    std::vector<Mat> B;  // d x q
    std::vector<Mat> H;  // m x d
    std::vector<Vec> u;  // q
    Vec x0;
    Mat P0;

    int horizon() const { return static_cast<int>(F.size()); }
    int state_dim() const { return static_cast<int>(x0.size()); }
    int meas_dim() const { return H.empty() ? 0 : static_cast<int>(H.front().rows()); }
    int input_dim() const { return B.empty() ? 0 : static_cast<int>(B.front().cols()); }

    // Throws ModelError on any dimension inconsistency.
    void validate() const;

    static SystemModel time_invariant(const Mat& F, const Mat& B, const Mat& H,
                                      const Vec& x0, const Mat& P0, int horizon);
};

// Linear observation of a subset of states over the whole horizon:
//   ys = Hs [x_{i_1}; ...; x_{i_l}] + nu,  nu ~ N(0, Psi),
// with strictly increasing indices i_1 < ... < i_l in [1, N].
struct SupervisorySpec {
    std::vector<int> indices;
    Mat Hs;   // obs_dim x (d * indices.size())
    Mat Psi;  // obs_dim x obs_dim, symmetric PSD
    Vec ys;

    bool empty() const { return indices.empty(); }
    int obs_dim() const { return static_cast<int>(ys.size()); }

    void validate(int state_dim, int horizon) const;

    static SupervisorySpec none() { return SupervisorySpec{}; }
};

// Gaussian belief over the current state stacked above copies of past states
// appended for supervision. The ledger lists the time indices of the copies
// in append order; dim() = d * (1 + ledger.size()).
struct AugmentedBelief {
    Vec X;
    Mat P;
    std::vector<int> ledger;
    int d = 0;

    int dim() const { return static_cast<int>(X.size()); }
    int appended() const { return static_cast<int>(ledger.size()); }
};

// Per-step quantities retained by a traced forward pass; everything the
// backward pass needs, nothing else.
struct FilterStepRecord {
    Mat F;    // d x d
    Mat H;    // m x d
    Mat K;    // D_k x m (D_k = belief dimension before any append at k)
    Mat S_L;  // lower Cholesky factor of the innovation covariance
    Vec r;    // innovation
    bool appended = false;
};

struct FilterTrace {
    std::vector<FilterStepRecord> steps;
    // Post-predict and post-append beliefs, retained only on request
    // (diagnostics and per-step sensitivity checks).
    std::vector<AugmentedBelief> priors;
    std::vector<AugmentedBelief> posteriors;

    std::size_t element_count() const;
};

// Factorized negative log-likelihood, 2*pi constants included.
struct LossBreakdown {
    double ell_o = 0.0;
    double ell_s = 0.0;
    double total = 0.0;
    std::vector<double> per_step;  // primary loss terms l_k
    Vec v;    // supervisory residual
    Mat C;    // supervisory innovation covariance (jitter included)
    Mat C_L;  // its lower Cholesky factor

    double weighted(const LossWeights& w) const { return w.w_o * ell_o + w.w_s * ell_s; }
};

}  // namespace kfcal
