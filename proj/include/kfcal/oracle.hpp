#pragma once

#include <functional>
#include <vector>

#include "kfcal/model.hpp"
#include "kfcal/params.hpp"

namespace kfcal {

// Independent ground-truth machinery. joint_nll evaluates the exact joint
// Gaussian negative log-likelihood of all measurements by dense assembly of
// the stacked state distribution, with no filtering involved; it is the
// referee for the factorized filter loss. Desk-scale only.

inline constexpr int kOracleMaxStackedDim = 512;

double joint_nll(const SystemModel& model, const SupervisorySpec& spec,
                 const std::vector<Vec>& y_o, const CovParam& param,
                 const Vec& theta);

// Central finite differences of an arbitrary scalar function of theta.
Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& theta,
                double h = 1e-5);

}  // namespace kfcal
