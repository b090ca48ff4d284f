#include "fwi/born.hpp"

#include <cmath>
#include <optional>
#include <string>

#include "fwi/errors.hpp"
#include "fwi/parallel.hpp"

namespace fwi::born {

using wave::Propagator;

BornOperator::BornOperator(VelocityModel background, Acquisition acq, TimeAxis time, wave::SimConfig cfg,
                           bool cache_background)
    : background_(std::move(background)),
      acq_(std::move(acq)),
      time_(time),
      cfg_(cfg),
      cache_(cache_background) {
    cfg_.validate();
    acq_.validate(background_.grid());
    wave::check_cfl(background_, cfg_, time_.dt());
    wavelet_ = wave::ricker(time_, acq_.wavelet());
    if (cache_) cache_frames_.resize(acq_.sources().size());
}

const std::vector<std::vector<double>>& BornOperator::background_frames(
    const Propagator& prop, std::size_t s, std::vector<std::vector<double>>& scratch) const {
    if (cache_ && !cache_frames_[s].empty()) return cache_frames_[s];
    const wave::PointSource src{acq_.sources()[s], wavelet_, wave::Injection::nearest};
    auto hist = wave::forward_history(prop, time_, std::span(&src, 1), acq_.receivers(), s);
    if (cache_) {
        cache_frames_[s] = std::move(hist.frames);
        return cache_frames_[s];
    }
    scratch = std::move(hist.frames);
    return scratch;
}

std::vector<ShotRecord> BornOperator::apply(const Array2D& m1) const {
    const auto& g = grid();
    if (m1.rows() != g.nz() || m1.cols() != g.nx()) throw ValidationError("born: reflectivity must be nz x nx");
    if (!m1.all_finite()) throw ValidationError("born: reflectivity must be finite");
    const std::size_t ns = shots(), nt = time_.nt();
    std::vector<std::optional<ShotRecord>> out(ns);

    parallel_for(ns, [&](std::size_t s) {
        const Propagator prop(background_, cfg_, time_.dt());
        const auto m1p = prop.expand_from_model(m1);
        std::vector<Propagator::Tap> src_taps = prop.stencil(acq_.sources()[s], wave::Injection::nearest);
        std::vector<std::vector<Propagator::Tap>> rec_taps;
        for (const auto& r : acq_.receivers()) rec_taps.push_back(prop.stencil(r, wave::Injection::bilinear));
        Array2D samples(acq_.receivers().size(), nt);
        auto u0a = prop.make_field(), u0b = prop.make_field(), u0c = prop.make_field();
        auto u1a = prop.make_field(), u1b = prop.make_field(), u1c = prop.make_field();
        // a = level k-2, b = level k-1, c = level k
        for (std::size_t k = 1; k < nt; ++k) {
            prop.step(u0a.data(), u0b.data(), u0c.data());
            prop.inject(u0c.data(), src_taps, wavelet_[k - 1]);
            prop.step(u1a.data(), u1b.data(), u1c.data());
            for (std::size_t i = 0; i < m1p.size(); ++i) {
                if (m1p[i] == 0.0) continue;
                prop.add_row_forcing(u1c.data(), i, -m1p[i] * prop.dA_dm(i, u0c[i], u0b[i], u0a[i]));
            }
            for (std::size_t r = 0; r < rec_taps.size(); ++r) samples(r, k) = prop.sample(u1c.data(), rec_taps[r]);
            std::swap(u0a, u0b);
            std::swap(u0b, u0c);
            std::swap(u1a, u1b);
            std::swap(u1b, u1c);
        }
        if (!samples.all_finite()) throw NumericalError("born: scattered field became non-finite");
        out[s].emplace(time_, std::move(samples), s);
    });

    std::vector<ShotRecord> records;
    records.reserve(ns);
    for (auto& r : out) records.push_back(std::move(*r));
    return records;
}

Array2D BornOperator::apply_transpose(std::span<const ShotRecord> data) const {
    const std::size_t ns = shots();
    if (data.size() != ns) throw ValidationError("born: need one record per source");
    for (const auto& d : data)
        if (d.receivers() != acq_.receivers().size() || d.nt() != time_.nt())
            throw ValidationError("born: record shape does not match the acquisition");
    std::vector<Array2D> parts(ns);

    parallel_for(ns, [&](std::size_t s) {
        const Propagator prop(background_, cfg_, time_.dt());
        std::vector<std::vector<double>> scratch;
        const auto& frames = background_frames(prop, s, scratch);
        const auto acc = adjoint::correlate(prop, frames, acq_.receivers(), data[s]);
        prop.fold_to_model(acc, parts[s]);
    });

    Array2D out(grid().nz(), grid().nx());
    for (std::size_t s : adjoint::reduction_order(acq_.sources()))
        for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += parts[s].values()[i];
    return out;
}

std::vector<ShotRecord> born_forward(const VelocityModel& m0, const Reflectivity& m1, const Acquisition& acq,
                                     const TimeAxis& time, const wave::SimConfig& cfg) {
    if (!(m1.grid == m0.grid())) throw ValidationError("born_forward: reflectivity grid differs from background");
    return BornOperator(m0, acq, time, cfg).apply(m1.values);
}

Reflectivity migrate(const VelocityModel& m0, const Acquisition& acq, const TimeAxis& time,
                     const wave::SimConfig& cfg, std::span<const ShotRecord> residual) {
    return Reflectivity{m0.grid(), BornOperator(m0, acq, time, cfg).apply_transpose(residual)};
}

namespace {

double record_norm2(std::span<const ShotRecord> d) {
    double s = 0.0;
    for (const auto& r : d)
        for (double v : r.samples().values()) s += v * v;
    return s;
}

}  // namespace

LsrtmResult lsrtm(const VelocityModel& m0, const Acquisition& acq, const TimeAxis& time, const wave::SimConfig& cfg,
                  std::span<const ShotRecord> observed, const LsrtmOptions& options) {
    if (options.iterations < 1) throw ValidationError("lsrtm: need at least one iteration");
    const BornOperator op(m0, acq, time, cfg, options.cache_background);
    const auto& g = m0.grid();
    LsrtmResult result{Reflectivity{g, Array2D(g.nz(), g.nx())}, {}};

    std::vector<Array2D> r;
    for (const auto& d : observed) r.push_back(d.samples());
    auto as_records = [&](const std::vector<Array2D>& arrays) {
        std::vector<ShotRecord> recs;
        for (std::size_t s = 0; s < arrays.size(); ++s) recs.emplace_back(time, arrays[s], s);
        return recs;
    };
    const double d_norm = std::sqrt(record_norm2(observed));
    result.residual_norms.push_back(d_norm);
    if (d_norm == 0.0) return result;

    auto& x = result.reflectivity.values.values();
    Array2D s = op.apply_transpose(as_records(r));
    Array2D p = s;
    double gamma = dot(s.values(), s.values());
    for (std::size_t it = 0; it < options.iterations; ++it) {
        if (gamma == 0.0) break;
        const auto q = op.apply(p);
        const double qq = record_norm2(q);
        if (!std::isfinite(qq) || qq == 0.0)
            throw NumericalError("lsrtm: degenerate search direction at iteration " + std::to_string(it + 1));
        const double alpha = gamma / qq;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += alpha * p.values()[i];
        for (std::size_t k = 0; k < r.size(); ++k)
            for (std::size_t i = 0; i < r[k].size(); ++i) r[k].values()[i] -= alpha * q[k].samples().values()[i];
        double rn = 0.0;
        for (const auto& a : r) rn += dot(a.values(), a.values());
        rn = std::sqrt(rn);
        if (!std::isfinite(rn)) throw NumericalError("lsrtm: non-finite residual at iteration " + std::to_string(it + 1));
        result.residual_norms.push_back(rn);
        if (rn <= options.tolerance * d_norm) break;
        s = op.apply_transpose(as_records(r));
        const double gamma_new = dot(s.values(), s.values());
        const double beta = gamma_new / gamma;
        gamma = gamma_new;
        for (std::size_t i = 0; i < p.size(); ++i) p.values()[i] = s.values()[i] + beta * p.values()[i];
    }
    return result;
}

}  // namespace fwi::born
