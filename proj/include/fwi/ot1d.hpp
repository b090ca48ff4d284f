#pragma once

#include <span>
#include <vector>

#include "fwi/core.hpp"
#include "fwi/normalize.hpp"

namespace fwi::ot1d {

using normalize::Density1D;

struct Cdf1D {
    TimeAxis time;
    std::vector<double> F;  // F[i] = sum_{j<=i} p_j dt, last entry exactly 1
};

struct TransportPlan1D {
    std::vector<double> map;  // T(t_i) = G^{-1}(F(t_i))
};

struct W2Result {
    double value = 0.0;
    TransportPlan1D plan;
};

Cdf1D cdf(const Density1D& p);

/// Piecewise-linear inverse of the CDF through (-dt, 0) and (t_i, F_i).
double quantile(const Cdf1D& c, double y);

/// W2^2 = sum_i (t_i - T_i)^2 f_i dt.
W2Result w2_squared_1d(const Density1D& f, const Density1D& g);

/// Derivative of w2_squared_1d with respect to the samples of f.
std::vector<double> adjoint_source_1d(const Density1D& f, const Density1D& g);

/// Trace-by-trace W2 misfit J1 = sum_r W2^2(f_r, g_r) of normalized traces, with its adjoint source.
MisfitEvaluation trace_w2_misfit(const ShotRecord& sim, const ShotRecord& obs, const normalize::Normalization& n);

}  // namespace fwi::ot1d
