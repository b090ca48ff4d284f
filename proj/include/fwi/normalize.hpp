#pragma once

#include <span>
#include <vector>

#include "fwi/core.hpp"

namespace fwi::normalize {

enum class Kind { linear, exponential, sign_sensitive, square };

/// User-facing choice; zero c or floor means "derive from the data".
struct Normalization {
    Kind kind = Kind::linear;
    double c = 0.0;       // c1 lower bound (linear), c2 (exponential) or c3 (sign-sensitive)
    double floor = 0.0;   // absolute value added after scaling
    bool per_trace = false;  // linear only: c1 per trace instead of per gather

    void validate() const;
};

/// Fully resolved parameters shared by simulated and observed data.
struct ScaleParams {
    Kind kind = Kind::linear;
    double c = 0.0;
    double floor = 1e-12;
};

/// Resolve defaults: linear c1 = max(c, -min sim, -min obs); exponential / sign-sensitive
/// c = 1/max|obs|; floor = 1e-8 times the mean scaled observed amplitude.
ScaleParams resolve(const Normalization& n, std::span<const double> sim, std::span<const double> obs);

struct Scaled {
    std::vector<double> values;  // strictly positive
    std::vector<double> jac;     // d values / d raw, elementwise
};

/// Elementwise positive transform plus floor.
Scaled scale(std::span<const double> raw, const ScaleParams& p);

struct Density1D {
    TimeAxis time;
    std::vector<double> p;  // sum p * dt = 1
};

struct Normalized {
    Density1D density;
    double mass;  // sum of scaled values times dt
};

Normalized to_density(std::span<const double> scaled, const TimeAxis& time);

/// dJ/draw from dJ/dp: jac_i (a_i - sum_j a_j p_j dt) / mass.
std::vector<double> chain_rule(std::span<const double> adjoint_wrt_density, std::span<const double> jac, double mass,
                               const Density1D& density);

}  // namespace fwi::normalize
