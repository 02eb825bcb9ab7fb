#pragma once

#include "kfcal/types.hpp"

namespace kfcal {

inline constexpr double kLog2Pi = 1.8378770664093454836;

inline void symmetrize(Mat& a) {
    a = ((a + a.transpose()) * 0.5).eval();
}

inline Mat symmetrized(const Mat& a) {
    return (a + a.transpose()) * 0.5;
}

// Lower Cholesky factor of an SPD matrix; throws NumericalError with the
// caller-supplied context on failure.
Mat chol_factor(const Mat& a, const std::string& what);

// Solve A x = b given the lower Cholesky factor L of A.
Vec chol_solve(const Mat& L, const Vec& b);
Mat chol_solve(const Mat& L, const Mat& b);

// log |A| from the lower Cholesky factor of A.
inline double chol_logdet(const Mat& L) {
    return 2.0 * L.diagonal().array().log().sum();
}

inline double frobenius_inner(const Mat& a, const Mat& b) {
    return a.cwiseProduct(b).sum();
}

}  // namespace kfcal
