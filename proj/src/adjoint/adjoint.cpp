#include "fwi/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fwi/errors.hpp"
#include "fwi/parallel.hpp"

namespace fwi::adjoint {

namespace {

using wave::Propagator;

// Steps j = 1..last of the reversed recursion; w^j is v at time index nt - j.
void sweep(const Propagator& prop, std::span<const Point2> receivers, const ShotRecord& src, std::size_t last,
           const std::function<void(std::size_t, const double*)>& visit) {
    const std::size_t nt = src.nt();
    if (src.receivers() != receivers.size())
        throw ValidationError("adjoint: source record has " + std::to_string(src.receivers()) +
                              " traces but there are " + std::to_string(receivers.size()) + " receivers");
    std::vector<std::vector<Propagator::Tap>> taps;
    for (const auto& r : receivers) taps.push_back(prop.stencil(r, wave::Injection::bilinear));
    auto prev = prop.make_field(), cur = prop.make_field(), next = prop.make_field();
    for (std::size_t j = 1; j <= last; ++j) {
        prop.step(prev.data(), cur.data(), next.data());
        const std::size_t k = nt - j;
        for (std::size_t r = 0; r < receivers.size(); ++r) prop.inject(next.data(), taps[r], src.trace(r)[k]);
        visit(k, next.data());
        std::swap(prev, cur);
        std::swap(cur, next);
    }
    for (double v : cur)
        if (!std::isfinite(v)) throw NumericalError("adjoint wavefield became non-finite");
}

wave::PointSource ricker_source(const Acquisition& acq, std::size_t s, const std::vector<double>& wavelet) {
    return wave::PointSource{acq.sources()[s], wavelet, wave::Injection::nearest};
}

void check_observed(const Acquisition& acq, const TimeAxis& time, std::span<const ShotRecord> observed) {
    if (observed.size() != acq.sources().size())
        throw ValidationError("observed shot count " + std::to_string(observed.size()) + " does not match " +
                              std::to_string(acq.sources().size()) + " sources");
    for (const auto& shot : observed) {
        if (shot.receivers() != acq.receivers().size() || shot.nt() != time.nt())
            throw ValidationError("observed record shape does not match the acquisition and time axis");
        if (std::abs(shot.time().dt() - time.dt()) > 1e-12 * time.dt())
            throw ValidationError("observed record dt does not match the time axis");
    }
}

}  // namespace

std::vector<std::size_t> reduction_order(std::span<const Point2> sources) {
    std::vector<std::size_t> order(sources.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sources[a].x != sources[b].x) return sources[a].x < sources[b].x;
        return sources[a].z < sources[b].z;
    });
    return order;
}

void adjoint_sweep(const Propagator& prop, std::span<const Point2> receivers, const ShotRecord& adjoint_source,
                   const std::function<void(std::size_t, const double*)>& visit) {
    sweep(prop, receivers, adjoint_source, adjoint_source.nt() - 1, visit);
}

wave::WavefieldMovie adjoint_solve(const VelocityModel& model, std::span<const Point2> receivers,
                                   const ShotRecord& adjoint_source, const wave::SimConfig& cfg) {
    cfg.validate();
    for (const auto& r : receivers)
        if (!model.grid().contains(r)) throw ValidationError("adjoint_solve: receiver outside the grid");
    const auto& time = adjoint_source.time();
    wave::check_cfl(model, cfg, time.dt());
    const Propagator prop(model, cfg, time.dt());
    const std::size_t nt = time.nt();
    wave::WavefieldMovie movie(model.grid(), time, 1);
    auto& frames = movie.frames();
    frames.resize(nt, Array2D(model.grid().nz(), model.grid().nx()));
    // v^{nt-1} .. v^0; v^0 needs the final step driven by sample 0.
    sweep(prop, receivers, adjoint_source, nt,
          [&](std::size_t k, const double* v) { prop.extract(v, frames[k]); });
    return movie;
}

std::vector<double> correlate(const Propagator& prop, const std::vector<std::vector<double>>& frames,
                              std::span<const Point2> receivers, const ShotRecord& adjoint_source) {
    if (frames.size() != adjoint_source.nt()) throw ValidationError("correlate: frame count must equal nt");
    std::vector<double> acc(prop.field_size(), 0.0);
    const auto zero = prop.make_field();
    adjoint_sweep(prop, receivers, adjoint_source, [&](std::size_t k, const double* v) {
        const double* uk = frames[k].data();
        const double* uk1 = frames[k - 1].data();
        const double* uk2 = k >= 2 ? frames[k - 2].data() : zero.data();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i] * prop.dA_dm(i, uk[i], uk1[i], uk2[i]);
    });
    const double scale = -prop.cell_area() / (prop.dt() * prop.dt());
    for (auto& a : acc) a *= scale;
    return acc;
}

void mask_sources(GridField& field, std::span<const Point2> sources, double radius) {
    if (radius <= 0.0) return;
    const auto& g = field.grid;
    for (const auto& s : sources) {
        const double sx = std::round((s.x - g.x0()) / g.dx());
        const double sz = std::round((s.z - g.z0()) / g.dz());
        for (std::size_t iz = 0; iz < g.nz(); ++iz)
            for (std::size_t ix = 0; ix < g.nx(); ++ix) {
                const double ddx = static_cast<double>(ix) - sx, ddz = static_cast<double>(iz) - sz;
                if (ddx * ddx + ddz * ddz <= radius * radius) field.values(iz, ix) = 0.0;
            }
    }
}

GradientResult gradient(const VelocityModel& model, const Acquisition& acq, const TimeAxis& time,
                        const wave::SimConfig& cfg, std::span<const ShotRecord> observed,
                        const MisfitFunction& misfit, const GradientOptions& options) {
    cfg.validate();
    acq.validate(model.grid());
    check_observed(acq, time, observed);
    wave::check_cfl(model, cfg, time.dt());
    const auto wavelet = wave::ricker(time, acq.wavelet());
    const std::size_t ns = acq.sources().size();
    std::vector<double> values(ns);
    std::vector<Array2D> grads(ns);

    parallel_for(ns, [&](std::size_t s) {
        const Propagator prop(model, cfg, time.dt());
        const auto src = ricker_source(acq, s, wavelet);
        const auto hist = wave::forward_history(prop, time, std::span(&src, 1), acq.receivers(), s);
        const auto eval = misfit(hist.record, observed[s]);
        if (eval.adjoint_source.receivers() != hist.record.receivers() || eval.adjoint_source.nt() != time.nt())
            throw ValidationError("misfit adjoint source has the wrong shape");
        if (!std::isfinite(eval.value)) throw NumericalError("misfit value is not finite for shot " + std::to_string(s));
        const auto acc = correlate(prop, hist.frames, acq.receivers(), eval.adjoint_source);
        values[s] = eval.value;
        prop.fold_to_model(acc, grads[s]);
    });

    GradientResult out{0.0, GradientField{model.grid(), Array2D(model.grid().nz(), model.grid().nx())}, values};
    for (std::size_t s : reduction_order(acq.sources())) {
        out.value += values[s];
        auto& dst = out.gradient.values.values();
        const auto& src = grads[s].values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    mask_sources(out.gradient, acq.sources(), options.source_mask_radius);
    return out;
}

RtmImage rtm_image(const VelocityModel& background, const Acquisition& acq, const TimeAxis& time,
                   const wave::SimConfig& cfg, std::span<const ShotRecord> observed) {
    cfg.validate();
    acq.validate(background.grid());
    check_observed(acq, time, observed);
    wave::check_cfl(background, cfg, time.dt());
    const auto wavelet = wave::ricker(time, acq.wavelet());
    const std::size_t ns = acq.sources().size();
    const auto& g = background.grid();
    std::vector<Array2D> images(ns);

    parallel_for(ns, [&](std::size_t s) {
        const Propagator prop(background, cfg, time.dt());
        const auto src = ricker_source(acq, s, wavelet);
        const auto hist = wave::forward_history(prop, time, std::span(&src, 1), acq.receivers(), s);
        Array2D img(g.nz(), g.nx());
        adjoint_sweep(prop, acq.receivers(), observed[s], [&](std::size_t k, const double* v) {
            const double* u = hist.frames[k].data();
            for (std::size_t iz = 0; iz < g.nz(); ++iz)
                for (std::size_t ix = 0; ix < g.nx(); ++ix) {
                    const std::size_t i = prop.model_index(iz, ix);
                    img(iz, ix) += u[i] * v[i] * time.dt();
                }
        });
        images[s] = std::move(img);
    });

    RtmImage out{g, Array2D(g.nz(), g.nx())};
    for (std::size_t s : reduction_order(acq.sources()))
        for (std::size_t i = 0; i < images[s].size(); ++i) out.values.values()[i] += images[s].values()[i];
    return out;
}

}  // namespace fwi::adjoint
