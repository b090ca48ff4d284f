#pragma once

#include <vector>

namespace fwi::ray {

/// Slowness samples s(z) of a layered earth; piecewise linear in between. z starts at 0 and increases.
struct SlownessProfile {
    std::vector<double> z;
    std::vector<double> s;

    void validate() const;
    double at(double depth) const;
};

struct RayIntegrals {
    double T = 0.0;        // surface-to-surface travel time
    double X = 0.0;        // horizontal range
    double z_turn = 0.0;   // turning depth where s = p
};

/// T(p) = 2 int s^2 / eta dz and X(p) = 2 p int dz / eta, eta = sqrt(s^2 - p^2), from the surface to
/// the first depth where s = p. Adaptive Gauss-Kronrod per profile segment; the segment holding the
/// turning point uses z = z_p - zeta^2 to remove the inverse square root.
/// Throws DomainError when p >= s(0) (evanescent) or p < s along the whole profile (no turning point).
RayIntegrals ray_integrals(const SlownessProfile& profile, double p, double tol = 1e-10);

/// Depth of each slowness sample from z(s) = 1/pi int_0^X(s) acosh(p / s) dX (midpoint rule per X cell).
/// p must decrease from at most s0, X must increase; a (s0, 0) sample is prepended when missing.
/// Throws ValidationError when X is not monotone (no unique profile).
SlownessProfile herglotz_invert(const std::vector<double>& p, const std::vector<double>& X, double s0);

}  // namespace fwi::ray
