#include "fwi/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fwi/errors.hpp"

namespace fwi::normalize {

void Normalization::validate() const {
    if (!(std::isfinite(c) && c >= 0.0)) throw ParameterError("normalization: c must be >= 0");
    if (!(std::isfinite(floor) && floor >= 0.0)) throw ParameterError("normalization: floor must be >= 0");
}

namespace {

double max_abs(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

double raw_map(Kind kind, double c, double f) {
    switch (kind) {
        case Kind::linear: return f + c;
        case Kind::exponential: return std::exp(c * f);
        case Kind::sign_sensitive: return f >= 0.0 ? f + 1.0 / c : std::exp(c * f) / c;
        case Kind::square: return f * f;
    }
    return f;
}

double raw_jac(Kind kind, double c, double f) {
    switch (kind) {
        case Kind::linear: return 1.0;
        case Kind::exponential: return c * std::exp(c * f);
        case Kind::sign_sensitive: return f >= 0.0 ? 1.0 : std::exp(c * f);
        case Kind::square: return 2.0 * f;
    }
    return 1.0;
}

}  // namespace

ScaleParams resolve(const Normalization& n, std::span<const double> sim, std::span<const double> obs) {
    n.validate();
    ScaleParams p{n.kind, n.c, n.floor};
    switch (n.kind) {
        case Kind::linear: {
            double lo = 0.0;
            for (double v : sim) lo = std::max(lo, -v);
            for (double v : obs) lo = std::max(lo, -v);
            p.c = std::max(n.c, lo);
            break;
        }
        case Kind::exponential:
        case Kind::sign_sensitive:
            if (p.c == 0.0) {
                const double m = max_abs(obs);
                p.c = m > 0.0 ? 1.0 / m : 1.0;
            }
            break;
        case Kind::square: break;
    }
    if (p.floor == 0.0) {
        double mean = 0.0;
        for (double v : obs) mean += raw_map(p.kind, p.c, v);
        mean = obs.empty() ? 0.0 : mean / static_cast<double>(obs.size());
        p.floor = mean > 0.0 ? 1e-8 * mean : 1e-12;
    }
    return p;
}

Scaled scale(std::span<const double> raw, const ScaleParams& p) {
    if (!(p.floor > 0.0)) throw ParameterError("normalization: floor must be positive");
    if (p.kind != Kind::linear && p.kind != Kind::square && !(p.c > 0.0))
        throw ParameterError("normalization: c must be positive");
    Scaled out;
    out.values.resize(raw.size());
    out.jac.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double f = raw[i];
        if (!std::isfinite(f)) throw ValidationError("normalization: raw data must be finite");
        if ((p.kind == Kind::exponential || p.kind == Kind::sign_sensitive) && std::abs(p.c * f) > 700.0)
            throw ParameterError("exponential scaling overflows (|c f| = " + std::to_string(std::abs(p.c * f)) +
                                 "); use a smaller c");
        const double v = raw_map(p.kind, p.c, f);
        if (v < 0.0) throw ParameterError("linear scaling offset c1 is below -min(data)");
        out.values[i] = v + p.floor;
        out.jac[i] = raw_jac(p.kind, p.c, f);
    }
    return out;
}

Normalized to_density(std::span<const double> scaled, const TimeAxis& time) {
    if (scaled.size() != time.nt()) throw ValidationError("to_density: length must equal nt");
    double mass = 0.0;
    for (double v : scaled) {
        if (!(v > 0.0)) throw ValidationError("to_density: scaled signal must be strictly positive");
        mass += v * time.dt();
    }
    Normalized out{Density1D{time, std::vector<double>(scaled.size())}, mass};
    for (std::size_t i = 0; i < scaled.size(); ++i) out.density.p[i] = scaled[i] / mass;
    return out;
}

std::vector<double> chain_rule(std::span<const double> a, std::span<const double> jac, double mass,
                               const Density1D& density) {
    const std::size_t n = density.p.size();
    if (a.size() != n || jac.size() != n) throw ValidationError("chain_rule: shape mismatch");
    double proj = 0.0;
    for (std::size_t j = 0; j < n; ++j) proj += a[j] * density.p[j] * density.time.dt();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = jac[i] * (a[i] - proj) / mass;
    return out;
}

}  // namespace fwi::normalize
