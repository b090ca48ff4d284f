#include "fwi/misfit.hpp"

#include "fwi/errors.hpp"
#include "fwi/ot1d.hpp"

namespace fwi::misfit {

namespace {

void check_shapes(const ShotRecord& sim, const ShotRecord& obs, const char* who) {
    if (sim.receivers() != obs.receivers() || sim.nt() != obs.nt() || !(sim.time() == obs.time()))
        throw ValidationError(std::string(who) + ": record shapes differ");
}

}  // namespace

std::string to_string(Kind k) {
    switch (k) {
        case Kind::l2: return "l2";
        case Kind::integral_l2: return "integral_l2";
        case Kind::w2_trace: return "w2_trace";
        case Kind::w2_global: return "w2_global";
    }
    return "unknown";
}

Kind parse_kind(const std::string& name) {
    for (Kind k : {Kind::l2, Kind::integral_l2, Kind::w2_trace, Kind::w2_global})
        if (to_string(k) == name) return k;
    throw ParameterError("unknown misfit kind '" + name + "' (l2, integral_l2, w2_trace, w2_global)");
}

void MisfitKind::validate() const {
    if (kind == Kind::w2_trace || kind == Kind::w2_global) normalization.validate();
    if (kind == Kind::w2_global) {
        ma_params.validate();
        if (density.n < 5) throw ParameterError("misfit: density grid needs at least 5 nodes per side");
        if (density.smooth_sigma < 0.0) throw ParameterError("misfit: smoothing width must be non-negative");
    }
}

MisfitEvaluation l2(const ShotRecord& sim, const ShotRecord& obs) {
    check_shapes(sim, obs, "l2");
    const double dt = sim.time().dt();
    Array2D adj(sim.receivers(), sim.nt());
    double value = 0.0;
    for (std::size_t k = 0; k < adj.size(); ++k) {
        const double r = sim.samples().values()[k] - obs.samples().values()[k];
        value += r * r;
        adj.values()[k] = r * dt;
    }
    return {0.5 * value * dt, ShotRecord(sim.time(), std::move(adj), sim.source_index())};
}

MisfitEvaluation integral_l2(const ShotRecord& sim, const ShotRecord& obs) {
    check_shapes(sim, obs, "integral_l2");
    const double dt = sim.time().dt();
    const std::size_t nt = sim.nt();
    Array2D adj(sim.receivers(), nt);
    std::vector<double> diff(nt);
    double value = 0.0;
    for (std::size_t r = 0; r < sim.receivers(); ++r) {
        const auto f = sim.trace(r), g = obs.trace(r);
        double acc = 0.0;
        for (std::size_t i = 0; i < nt; ++i) {
            acc += (f[i] - g[i]) * dt;
            diff[i] = acc;
            value += acc * acc;
        }
        double back = 0.0;
        for (std::size_t i = nt; i-- > 0;) {
            back += diff[i];
            adj(r, i) = back * dt * dt;
        }
    }
    return {0.5 * value * dt, ShotRecord(sim.time(), std::move(adj), sim.source_index())};
}

MisfitEvaluation w2_global(const ShotRecord& sim, const ShotRecord& obs, const normalize::Normalization& n,
                           const ma::MaParams& params, const ma::DensityOptions& density) {
    check_shapes(sim, obs, "w2_global");
    const auto sp = normalize::resolve(n, sim.samples().values(), obs.samples().values());
    const auto f = ma::dataset_to_density(sim, sp, density);
    const auto g = ma::dataset_to_density(obs, sp, density);
    const auto sol = ma::ma_solve(f.density, g.density, params);
    const double value = ma::w2_squared_2d(f.density, g.density, sol);
    const auto grad = ma::w2_gradient_2d(f.density, g.density, sol);
    return {value, ShotRecord(sim.time(), ma::pullback_to_data(f, grad, density), sim.source_index())};
}

MisfitEvaluation evaluate(const MisfitKind& kind, const ShotRecord& sim, const ShotRecord& obs) {
    switch (kind.kind) {
        case Kind::l2: return l2(sim, obs);
        case Kind::integral_l2: return integral_l2(sim, obs);
        case Kind::w2_trace: return ot1d::trace_w2_misfit(sim, obs, kind.normalization);
        case Kind::w2_global: return w2_global(sim, obs, kind.normalization, kind.ma_params, kind.density);
    }
    throw ParameterError("misfit: unknown kind");
}

adjoint::MisfitFunction make_function(const MisfitKind& kind, std::atomic<std::size_t>* fallbacks) {
    kind.validate();
    return [kind, fallbacks](const ShotRecord& sim, const ShotRecord& obs) {
        if (kind.kind != Kind::w2_global || !kind.fallback_to_trace) return evaluate(kind, sim, obs);
        try {
            return evaluate(kind, sim, obs);
        } catch (const ConvergenceError&) {
        } catch (const DomainError&) {
        }
        if (fallbacks) ++*fallbacks;
        return ot1d::trace_w2_misfit(sim, obs, kind.normalization);
    };
}

adjoint::GradientResult gradient(const VelocityModel& model, const Acquisition& acq, const TimeAxis& time,
                                 const wave::SimConfig& cfg, std::span<const ShotRecord> observed,
                                 const MisfitKind& kind, const adjoint::GradientOptions& options) {
    return adjoint::gradient(model, acq, time, cfg, observed, make_function(kind), options);
}

}  // namespace fwi::misfit
