#include "fwi/raypath.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fwi/errors.hpp"

namespace fwi::ray {

namespace {

constexpr unsigned kMaxDepth = 15;

template <class F>
double integrate(F&& fn, double a, double b, double tol) {
    if (b <= a) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(fn, a, b, kMaxDepth, tol);
}

}  // namespace

void SlownessProfile::validate() const {
    if (z.size() < 2 || z.size() != s.size()) throw ValidationError("SlownessProfile: need matching z and s with >= 2 samples");
    if (z.front() != 0.0) throw ValidationError("SlownessProfile: depth must start at 0");
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!std::isfinite(z[i]) || !std::isfinite(s[i])) throw ValidationError("SlownessProfile: non-finite sample");
        if (s[i] <= 0.0) throw ValidationError("SlownessProfile: slowness must be positive");
        if (i > 0 && z[i] <= z[i - 1]) throw ValidationError("SlownessProfile: depth must increase");
    }
}

double SlownessProfile::at(double depth) const {
    if (depth <= z.front()) return s.front();
    if (depth >= z.back()) return s.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(z.begin(), z.end(), depth) - z.begin());
    const double w = (depth - z[k - 1]) / (z[k] - z[k - 1]);
    return (1.0 - w) * s[k - 1] + w * s[k];
}

RayIntegrals ray_integrals(const SlownessProfile& profile, double p, double tol) {
    profile.validate();
    if (!(p > 0.0)) throw DomainError("ray_integrals: ray parameter must be positive");
    if (p >= profile.s.front()) throw DomainError("ray_integrals: p >= s(0), the ray is evanescent");

    // first segment on which s drops to p
    std::size_t k = 1;
    while (k < profile.z.size() && profile.s[k] > p) ++k;
    if (k == profile.z.size()) throw DomainError("ray_integrals: no turning point for p = " + std::to_string(p));

    const auto& z = profile.z;
    const auto& s = profile.s;
    const double zp = z[k - 1] + (s[k - 1] - p) / (s[k - 1] - s[k]) * (z[k] - z[k - 1]);

    const auto eta = [&](double depth) {
        const double sv = profile.at(depth);
        return std::sqrt(std::max(sv * sv - p * p, 0.0));
    };

    // Every segment is integrated in zeta with z = z_p - zeta^2, so dz / eta = 2 zeta dzeta / eta stays
    // bounded even when the turning point sits on a segment end.
    double t = 0.0, x = 0.0;
    for (std::size_t i = 1; i < k; ++i) {
        const double lo = std::sqrt(std::max(zp - z[i], 0.0)), hi = std::sqrt(zp - z[i - 1]);
        t += integrate([&](double zeta) { const double d = zp - zeta * zeta, sv = profile.at(d); return 2.0 * zeta * sv * sv / eta(d); },
                       lo, hi, tol);
        x += integrate([&](double zeta) { return 2.0 * zeta / eta(zp - zeta * zeta); }, lo, hi, tol);
    }

    // last piece [z_{k-1}, z_p], z = z_p - zeta^2. On a linear segment s^2 - p^2 = zeta^2 (a + b zeta^2)
    // with a = 2 p sigma, b = sigma^2, sigma = -ds/dz > 0, so dz/eta = 2 dzeta / sqrt(a + b zeta^2).
    const double sigma = (s[k - 1] - s[k]) / (z[k] - z[k - 1]);
    const double a = 2.0 * p * sigma, b = sigma * sigma;
    const double zeta_max = std::sqrt(std::max(zp - z[k - 1], 0.0));
    const auto root = [&](double zeta) { return std::sqrt(a + b * zeta * zeta); };
    t += integrate([&](double zeta) { const double sv = p + sigma * zeta * zeta; return 2.0 * sv * sv / root(zeta); },
                   0.0, zeta_max, tol);
    x += integrate([&](double zeta) { return 2.0 / root(zeta); }, 0.0, zeta_max, tol);

    return {2.0 * t, 2.0 * p * x, zp};
}

SlownessProfile herglotz_invert(const std::vector<double>& p, const std::vector<double>& X, double s0) {
    if (p.size() != X.size() || p.empty()) throw ValidationError("herglotz_invert: p and X must have equal non-zero length");
    if (!(s0 > 0.0)) throw ValidationError("herglotz_invert: surface slowness must be positive");
    std::vector<double> ps, xs;
    if (p.front() < s0) {
        ps.push_back(s0);
        xs.push_back(0.0);
    } else if (p.front() > s0) {
        throw ValidationError("herglotz_invert: first ray parameter exceeds the surface slowness");
    }
    ps.insert(ps.end(), p.begin(), p.end());
    xs.insert(xs.end(), X.begin(), X.end());
    for (std::size_t i = 1; i < ps.size(); ++i) {
        if (!(ps[i] < ps[i - 1])) throw ValidationError("herglotz_invert: p must decrease strictly");
        if (!(xs[i] > xs[i - 1]))
            throw ValidationError("herglotz_invert: X(p) is not monotone near p = " + std::to_string(ps[i]) +
                                  " (low-velocity zone, first arrivals do not determine the profile)");
    }

    SlownessProfile out;
    out.z.assign(ps.size(), 0.0);
    out.s = ps;
    for (std::size_t k = 1; k < ps.size(); ++k) {
        double depth = 0.0;
        for (std::size_t j = 1; j <= k; ++j) {
            const double mid = 0.5 * (ps[j - 1] + ps[j]);
            depth += (xs[j] - xs[j - 1]) * std::acosh(mid / ps[k]);
        }
        out.z[k] = depth / std::numbers::pi;
    }
    return out;
}

}  // namespace fwi::ray
