#include "kfcal/model.hpp"

#include <string>

namespace kfcal {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ModelError(what);
}

}  // namespace

void SystemModel::validate() const {
    const int n = horizon();
    const int d = state_dim();
    require(d > 0, "state dimension must be positive");
    require(static_cast<int>(B.size()) == n && static_cast<int>(H.size()) == n &&
                static_cast<int>(u.size()) == n,
            "F, B, H, u must all have the horizon length");
    require(P0.rows() == d && P0.cols() == d, "P0 must be d x d");
    const int m = meas_dim();
    const int q = input_dim();
    for (int k = 0; k < n; ++k) {
        require(F[k].rows() == d && F[k].cols() == d,
                "F has wrong shape at step " + std::to_string(k + 1));
        require(B[k].rows() == d && B[k].cols() == q,
                "B has wrong shape at step " + std::to_string(k + 1));
        require(H[k].rows() == m && H[k].cols() == d,
                "H has wrong shape at step " + std::to_string(k + 1));
        require(static_cast<int>(u[k].size()) == q,
                "u has wrong size at step " + std::to_string(k + 1));
    }
}

SystemModel SystemModel::time_invariant(const Mat& F, const Mat& B, const Mat& H,
                                        const Vec& x0, const Mat& P0, int horizon) {
    SystemModel m;
    m.F.assign(horizon, F);
    m.B.assign(horizon, B);
    m.H.assign(horizon, H);
    m.u.assign(horizon, Vec::Zero(B.cols()));
    m.x0 = x0;
    m.P0 = P0;
    return m;
}

void SupervisorySpec::validate(int state_dim, int horizon) const {
    if (empty()) {
        require(Hs.size() == 0 && ys.size() == 0,
                "supervisory spec with no indices must have empty Hs and ys");
        return;
    }
    int prev = 0;
    for (int i : indices) {
        require(i >= 1 && i <= horizon, "supervisory index " + std::to_string(i) +
                                            " outside [1, N]");
        require(i > prev, "supervisory indices must be strictly increasing");
        prev = i;
    }
    const int cols = state_dim * static_cast<int>(indices.size());
    require(Hs.cols() == cols, "Hs must have d * |indices| columns");
    require(Hs.rows() == ys.size(), "Hs row count must match ys");
    require(Psi.rows() == ys.size() && Psi.cols() == ys.size(),
            "Psi must be square with the observation dimension");
    require((Psi - Psi.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + Psi.norm()),
            "Psi must be symmetric");
}

std::size_t FilterTrace::element_count() const {
    std::size_t n = 0;
    for (const auto& s : steps) {
        n += static_cast<std::size_t>(s.F.size()) + s.H.size() + s.K.size() +
             s.S_L.size() + s.r.size() + 1;
    }
    return n;
}

}  // namespace kfcal
