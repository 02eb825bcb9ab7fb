#include "kfcal/linalg.hpp"

#include <Eigen/Cholesky>

namespace kfcal {

Mat chol_factor(const Mat& a, const std::string& what) {
    Eigen::LLT<Mat> llt(a);
    if (llt.info() != Eigen::Success) {
        throw NumericalError(what + ": matrix is not positive definite");
    }
    return llt.matrixL();
}

Vec chol_solve(const Mat& L, const Vec& b) {
    Vec x = L.triangularView<Eigen::Lower>().solve(b);
    L.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

Mat chol_solve(const Mat& L, const Mat& b) {
    Mat x = L.triangularView<Eigen::Lower>().solve(b);
    L.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

}  // namespace kfcal
