#pragma once

#include <functional>

#include "kfcal/types.hpp"

namespace kfcal {

enum class CovKind { Isotropic, Diagonal, Cholesky, FixedQVaryR, Custom };

const char* to_string(CovKind kind);

// Maps an optimization vector theta to the noise covariances R(theta) (m x m,
// SPD) and Q_k(theta) (d x d, PSD) together with their analytic coordinate
// derivatives.
//
// Built-in R maps (log coordinates are clamped to |theta_j| <= 20 before
// exponentiation; the clamp is part of the map, so derivatives vanish beyond
// the bound):
//   Isotropic:  R = exp(theta_0) I,                      p = 1
//   Diagonal:   R = diag(exp(theta_1)..exp(theta_m)),    p = m
//   Cholesky:   R = L Lᵀ with the first m coordinates the log-diagonal of L
//               (row order) and the remaining m(m-1)/2 the strictly lower
//               triangle in row-major order,             p = m(m+1)/2
// Built-in kinds carry a constant Q (zero unless configured), so dQ/dtheta
// is identically zero for them. FixedQVaryR pairs an explicit constant Q with
// one of the three R maps; Custom supplies all four maps as callables.
class CovParam {
public:
    using RFn = std::function<Mat(const Vec&)>;
    using DRFn = std::function<Mat(const Vec&, int)>;
    using QFn = std::function<Mat(const Vec&, int)>;
    using DQFn = std::function<Mat(const Vec&, int, int)>;

    static CovParam isotropic(int meas_dim, int proc_dim, Mat fixed_q = Mat());
    static CovParam diagonal(int meas_dim, int proc_dim, Mat fixed_q = Mat());
    static CovParam cholesky(int meas_dim, int proc_dim, Mat fixed_q = Mat());
    static CovParam fixed_q_vary_r(CovKind r_kind, int meas_dim, const Mat& fixed_q);
    static CovParam custom(int p, int meas_dim, int proc_dim,
                           RFn r, DRFn dr, QFn q, DQFn dq);

    CovKind kind() const { return kind_; }
    CovKind r_kind() const { return r_kind_; }
    int dim() const { return p_; }
    int meas_dim() const { return meas_dim_; }
    int proc_dim() const { return proc_dim_; }

    // True when Q does not depend on theta (all built-in kinds).
    bool constant_q() const { return kind_ != CovKind::Custom; }

    Mat eval_R(const Vec& theta) const;
    Mat eval_Q(const Vec& theta, int k) const;
    Mat dR_dtheta(const Vec& theta, int j) const;
    Mat dQ_dtheta(const Vec& theta, int j, int k) const;

    // Neutral starting point (R = I for the built-in kinds).
    Vec default_theta0() const { return Vec::Zero(p_); }

    // Scalar isotropic placeholder; use the named factories.
    CovParam() = default;

private:
    void check_theta(const Vec& theta) const;
    void check_coord(int j) const;
    Mat builtin_L(const Vec& theta) const;  // Cholesky kind only

    CovKind kind_ = CovKind::Isotropic;
    CovKind r_kind_ = CovKind::Isotropic;  // R map used by FixedQVaryR
    int p_ = 1;
    int meas_dim_ = 1;
    int proc_dim_ = 1;
    Mat fixed_q_;

    RFn custom_r_;
    DRFn custom_dr_;
    QFn custom_q_;
    DQFn custom_dq_;
};

}  // namespace kfcal
