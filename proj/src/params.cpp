#include "kfcal/params.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kfcal {

namespace {

constexpr double kLogClamp = 20.0;

double clamped_exp(double t) { return std::exp(std::clamp(t, -kLogClamp, kLogClamp)); }

// The clamp is part of the map: outside the bound the map is constant in
// that coordinate, so its derivative there is exactly zero.
bool inside_clamp(double t) { return std::abs(t) <= kLogClamp; }

int cholesky_dim(int m) { return m * (m + 1) / 2; }

}  // namespace

const char* to_string(CovKind kind) {
    switch (kind) {
        case CovKind::Isotropic: return "isotropic";
        case CovKind::Diagonal: return "diagonal";
        case CovKind::Cholesky: return "cholesky";
        case CovKind::FixedQVaryR: return "fixed-q-vary-r";
        case CovKind::Custom: return "custom";
    }
    return "?";
}

CovParam CovParam::isotropic(int meas_dim, int proc_dim, Mat fixed_q) {
    CovParam p;
    p.kind_ = p.r_kind_ = CovKind::Isotropic;
    p.p_ = 1;
    p.meas_dim_ = meas_dim;
    p.proc_dim_ = proc_dim;
    p.fixed_q_ = fixed_q.size() ? std::move(fixed_q) : Mat::Zero(proc_dim, proc_dim);
    return p;
}

CovParam CovParam::diagonal(int meas_dim, int proc_dim, Mat fixed_q) {
    CovParam p;
    p.kind_ = p.r_kind_ = CovKind::Diagonal;
    p.p_ = meas_dim;
    p.meas_dim_ = meas_dim;
    p.proc_dim_ = proc_dim;
    p.fixed_q_ = fixed_q.size() ? std::move(fixed_q) : Mat::Zero(proc_dim, proc_dim);
    return p;
}

CovParam CovParam::cholesky(int meas_dim, int proc_dim, Mat fixed_q) {
    CovParam p;
    p.kind_ = p.r_kind_ = CovKind::Cholesky;
    p.p_ = cholesky_dim(meas_dim);
    p.meas_dim_ = meas_dim;
    p.proc_dim_ = proc_dim;
    p.fixed_q_ = fixed_q.size() ? std::move(fixed_q) : Mat::Zero(proc_dim, proc_dim);
    return p;
}

CovParam CovParam::fixed_q_vary_r(CovKind r_kind, int meas_dim, const Mat& fixed_q) {
    if (r_kind != CovKind::Isotropic && r_kind != CovKind::Diagonal &&
        r_kind != CovKind::Cholesky) {
        throw ParamError("fixed_q_vary_r requires a built-in R map");
    }
    CovParam p;
    p.kind_ = CovKind::FixedQVaryR;
    p.r_kind_ = r_kind;
    p.meas_dim_ = meas_dim;
    p.proc_dim_ = static_cast<int>(fixed_q.rows());
    p.fixed_q_ = fixed_q;
    switch (r_kind) {
        case CovKind::Isotropic: p.p_ = 1; break;
        case CovKind::Diagonal: p.p_ = meas_dim; break;
        default: p.p_ = cholesky_dim(meas_dim); break;
    }
    return p;
}

CovParam CovParam::custom(int p, int meas_dim, int proc_dim,
                          RFn r, DRFn dr, QFn q, DQFn dq) {
    CovParam c;
    c.kind_ = c.r_kind_ = CovKind::Custom;
    c.p_ = p;
    c.meas_dim_ = meas_dim;
    c.proc_dim_ = proc_dim;
    c.custom_r_ = std::move(r);
    c.custom_dr_ = std::move(dr);
    c.custom_q_ = std::move(q);
    c.custom_dq_ = std::move(dq);
    return c;
}

void CovParam::check_theta(const Vec& theta) const {
    if (static_cast<int>(theta.size()) != p_) {
        throw ParamError("theta has dimension " + std::to_string(theta.size()) +
                         ", expected " + std::to_string(p_) + " for kind " +
                         to_string(kind_));
    }
}

void CovParam::check_coord(int j) const {
    if (j < 0 || j >= p_) {
        throw ParamError("coordinate index " + std::to_string(j) +
                         " out of range [0, " + std::to_string(p_) + ")");
    }
}

Mat CovParam::builtin_L(const Vec& theta) const {
    const int m = meas_dim_;
    Mat L = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) L(i, i) = clamped_exp(theta[i]);
    int idx = m;
    for (int i = 1; i < m; ++i)
        for (int c = 0; c < i; ++c) L(i, c) = theta[idx++];
    return L;
}

Mat CovParam::eval_R(const Vec& theta) const {
    check_theta(theta);
    const int m = meas_dim_;
    switch (r_kind_) {
        case CovKind::Isotropic:
            return clamped_exp(theta[0]) * Mat::Identity(m, m);
        case CovKind::Diagonal: {
            Mat r = Mat::Zero(m, m);
            for (int i = 0; i < m; ++i) r(i, i) = clamped_exp(theta[i]);
            return r;
        }
        case CovKind::Cholesky: {
            Mat L = builtin_L(theta);
            return L * L.transpose();
        }
        default:
            return custom_r_(theta);
    }
}

Mat CovParam::eval_Q(const Vec& theta, int k) const {
    check_theta(theta);
    if (kind_ == CovKind::Custom) return custom_q_(theta, k);
    return fixed_q_;
}

Mat CovParam::dR_dtheta(const Vec& theta, int j) const {
    check_theta(theta);
    check_coord(j);
    const int m = meas_dim_;
    switch (r_kind_) {
        case CovKind::Isotropic: {
            const double g = inside_clamp(theta[0]) ? clamped_exp(theta[0]) : 0.0;
            return g * Mat::Identity(m, m);
        }
        case CovKind::Diagonal: {
            Mat d = Mat::Zero(m, m);
            d(j, j) = inside_clamp(theta[j]) ? clamped_exp(theta[j]) : 0.0;
            return d;
        }
        case CovKind::Cholesky: {
            Mat L = builtin_L(theta);
            Mat dL = Mat::Zero(m, m);
            if (j < m) {
                dL(j, j) = inside_clamp(theta[j]) ? L(j, j) : 0.0;
            } else {
                int idx = m;
                for (int i = 1; i < m; ++i)
                    for (int c = 0; c < i; ++c) {
                        if (idx == j) dL(i, c) = 1.0;
                        ++idx;
                    }
            }
            Mat d = dL * L.transpose();
            return d + d.transpose();
        }
        default:
            return custom_dr_(theta, j);
    }
}

Mat CovParam::dQ_dtheta(const Vec& theta, int j, int k) const {
    check_theta(theta);
    check_coord(j);
    if (kind_ == CovKind::Custom) return custom_dq_(theta, j, k);
    return Mat::Zero(proc_dim_, proc_dim_);
}

}  // namespace kfcal
