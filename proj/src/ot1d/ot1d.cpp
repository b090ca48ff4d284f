#include "fwi/ot1d.hpp"

#include <algorithm>
#include <cmath>

#include "fwi/errors.hpp"

namespace fwi::ot1d {

namespace {

void check_pair(const Density1D& f, const Density1D& g) {
    if (!(f.time == g.time) || f.p.size() != g.p.size())
        throw ValidationError("w2_squared_1d: densities must share a time axis");
}

// Quantile together with the index of the CDF cell it falls in (cell i spans t_{i-1}..t_i).
struct Located {
    double t;
    std::size_t cell;
};

Located locate(const Cdf1D& c, double y) {
    const double dt = c.time.dt();
    const auto it = std::lower_bound(c.F.begin(), c.F.end(), y);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - c.F.begin()), c.F.size() - 1);
    const double lo = i == 0 ? 0.0 : c.F[i - 1];
    const double t_lo = c.time.time(i) - dt;
    const double span = c.F[i] - lo;
    const double t = span > 0.0 ? t_lo + dt * std::clamp((y - lo) / span, 0.0, 1.0) : t_lo;
    return {t, i};
}

}  // namespace

Cdf1D cdf(const Density1D& p) {
    if (p.p.size() != p.time.nt()) throw ValidationError("cdf: density length must equal nt");
    Cdf1D c{p.time, std::vector<double>(p.p.size())};
    double acc = 0.0;
    for (std::size_t i = 0; i < p.p.size(); ++i) {
        if (!(p.p[i] >= 0.0)) throw ValidationError("cdf: density must be non-negative");
        acc += p.p[i] * p.time.dt();
        c.F[i] = acc;
    }
    if (!(acc > 0.0)) throw ValidationError("cdf: density has zero mass");
    for (auto& v : c.F) v /= acc;
    c.F.back() = 1.0;
    return c;
}

double quantile(const Cdf1D& c, double y) {
    if (!(y >= 0.0 && y <= 1.0)) throw DomainError("quantile: level must lie in [0, 1]");
    return locate(c, y).t;
}

W2Result w2_squared_1d(const Density1D& f, const Density1D& g) {
    check_pair(f, g);
    const auto F = cdf(f);
    const auto G = cdf(g);
    const double dt = f.time.dt();
    W2Result out;
    out.plan.map.resize(f.p.size());
    for (std::size_t i = 0; i < f.p.size(); ++i) {
        const double T = locate(G, F.F[i]).t;
        out.plan.map[i] = T;
        const double d = f.time.time(i) - T;
        out.value += d * d * f.p[i] * dt;
    }
    return out;
}

std::vector<double> adjoint_source_1d(const Density1D& f, const Density1D& g) {
    check_pair(f, g);
    const auto F = cdf(f);
    const auto G = cdf(g);
    const double dt = f.time.dt();
    const std::size_t n = f.p.size();
    std::vector<double> out(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto loc = locate(G, F.F[i]);
        const double d = f.time.time(i) - loc.t;
        const double lo = loc.cell == 0 ? 0.0 : G.F[loc.cell - 1];
        const double g_cell = (G.F[loc.cell] - lo) / dt;  // slope of G on the cell holding T
        w[i] = g_cell > 0.0 ? -2.0 * d * f.p[i] * dt / g_cell : 0.0;
        out[i] = d * d * dt;
    }
    double suffix = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        suffix += w[i];
        out[i] += suffix * dt;
    }
    return out;
}

MisfitEvaluation trace_w2_misfit(const ShotRecord& sim, const ShotRecord& obs, const normalize::Normalization& n) {
    if (sim.receivers() != obs.receivers() || sim.nt() != obs.nt() || !(sim.time() == obs.time()))
        throw ValidationError("trace_w2_misfit: record shapes differ");
    const auto& time = sim.time();
    const std::size_t R = sim.receivers();
    normalize::ScaleParams gather;
    const bool per_trace = n.per_trace && n.kind == normalize::Kind::linear;
    if (!per_trace) gather = normalize::resolve(n, sim.samples().values(), obs.samples().values());

    Array2D adj(R, sim.nt());
    double value = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        const auto params = per_trace ? normalize::resolve(n, sim.trace(r), obs.trace(r)) : gather;
        const auto fs = normalize::scale(sim.trace(r), params);
        const auto gs = normalize::scale(obs.trace(r), params);
        const auto fd = normalize::to_density(fs.values, time);
        const auto gd = normalize::to_density(gs.values, time);
        value += w2_squared_1d(fd.density, gd.density).value;
        const auto a = adjoint_source_1d(fd.density, gd.density);
        const auto raw = normalize::chain_rule(a, fs.jac, fd.mass, fd.density);
        std::copy(raw.begin(), raw.end(), adj.row(r).begin());
    }
    return MisfitEvaluation{value, ShotRecord(time, std::move(adj), sim.source_index())};
}

}  // namespace fwi::ot1d
