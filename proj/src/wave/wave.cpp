#include "fwi/wave.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fwi/errors.hpp"

namespace fwi::wave {

void SimConfig::validate() const {
    if (spatial_order != 2 && spatial_order != 4) throw ValidationError("SimConfig: spatial order must be 2 or 4");
    if (!(cfl_safety > 0.0 && cfl_safety < 1.0)) throw ValidationError("SimConfig: cfl_safety must lie in (0, 1)");
    if (!(std::isfinite(sponge_strength) && sponge_strength >= 0.0))
        throw ValidationError("SimConfig: sponge strength must be >= 0");
    if (movie_memory_cap == 0) throw ValidationError("SimConfig: movie memory cap must be positive");
}

std::vector<double> ricker(const TimeAxis& time, const SourceWavelet& wavelet) {
    wavelet.validate();
    std::vector<double> w(time.nt());
    const double a = std::numbers::pi * std::numbers::pi * wavelet.peak_frequency * wavelet.peak_frequency;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double tau = time.time(i) - wavelet.delay;
        const double x = a * tau * tau;
        w[i] = wavelet.amplitude * (1.0 - 2.0 * x) * std::exp(-x);
    }
    if (wavelet.highpass_cut > 0.0) highpass_zero_phase(w, time.dt(), wavelet.highpass_cut);
    return w;
}

namespace {

struct Biquad {
    double b0, b1, b2, a1, a2;

    void run(std::span<double> x) const {
        double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
        for (double& v : x) {
            const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = v;
            y2 = y1;
            y1 = y;
            v = y;
        }
    }
};

// Bilinear-transform high-pass section with prewarped cutoff.
Biquad highpass_section(double cut_hz, double dt, double q) {
    const double w0 = 2.0 * std::numbers::pi * cut_hz * dt;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    return Biquad{(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0, -2.0 * cw / a0, (1.0 - alpha) / a0};
}

}  // namespace

void highpass_zero_phase(std::span<double> signal, double dt, double cut_hz) {
    if (!(cut_hz > 0.0) || !(cut_hz < 0.5 / dt)) throw ValidationError("highpass: cut must lie in (0, Nyquist)");
    // 4th-order Butterworth = two sections with Q = 1/(2 cos(pi/8)) and 1/(2 cos(3 pi/8)).
    const Biquad s1 = highpass_section(cut_hz, dt, 1.0 / (2.0 * std::cos(std::numbers::pi / 8.0)));
    const Biquad s2 = highpass_section(cut_hz, dt, 1.0 / (2.0 * std::cos(3.0 * std::numbers::pi / 8.0)));
    s1.run(signal);
    s2.run(signal);
    std::reverse(signal.begin(), signal.end());
    s1.run(signal);
    s2.run(signal);
    std::reverse(signal.begin(), signal.end());
}

double max_stable_dt(const VelocityModel& model, const SimConfig& cfg) {
    cfg.validate();
    // Von Neumann: c^2 dt^2 * max symbol <= 4, where the 1D second-difference symbol peaks at
    // 4/h^2 (2nd order) or 16/(3 h^2) (4th order).
    const double order_const = cfg.spatial_order == 2 ? 1.0 : std::sqrt(0.75);
    const auto& g = model.grid();
    const double inv = std::sqrt(1.0 / (g.dx() * g.dx()) + 1.0 / (g.dz() * g.dz()));
    return cfg.cfl_safety * order_const / (model.c_max() * inv);
}

WavefieldMovie::WavefieldMovie(Grid2D grid, TimeAxis time, std::size_t stride)
    : grid_(grid), time_(time), stride_(stride) {
    if (stride_ == 0) throw ValidationError("WavefieldMovie: stride must be >= 1");
}

Propagator::Propagator(const VelocityModel& model, const SimConfig& cfg, double dt)
    : model_nx_(model.grid().nx()),
      model_nz_(model.grid().nz()),
      pad_side_(cfg.sponge_width),
      pad_top_(cfg.free_surface ? 0 : cfg.sponge_width),
      pad_bottom_(cfg.sponge_width),
      nxp_(model_nx_ + 2 * pad_side_),
      nzp_(model_nz_ + pad_top_ + pad_bottom_),
      stride_(nxp_ + 2 * kHalo),
      dx_(model.grid().dx()),
      dz_(model.grid().dz()),
      x0_(model.grid().x0()),
      z0_(model.grid().z0()),
      dt_(dt),
      cell_area_(model.grid().dx() * model.grid().dz()),
      order_(cfg.spatial_order) {
    cfg.validate();
    if (!(std::isfinite(dt) && dt > 0.0)) throw ValidationError("Propagator: dt must be positive");
    const std::size_t n = field_size();
    m_.assign(n, 0.0);
    damp_.assign(n, 0.0);
    two_m_.assign(n, 0.0);
    lag_coef_.assign(n, 0.0);
    inv_diag_.assign(n, 0.0);
    lap_.assign(n, 0.0);

    const auto padded_m = expand_from_model(model.m());
    const double width = static_cast<double>(std::max<std::size_t>(cfg.sponge_width, 1));
    const double c_ref = cfg.sponge_velocity > 0.0 ? cfg.sponge_velocity : model.c_max();
    const double sigma_max = cfg.sponge_strength * c_ref / (width * std::min(dx_, dz_));
    for (std::size_t iz = 0; iz < nzp_; ++iz) {
        for (std::size_t ix = 0; ix < nxp_; ++ix) {
            const std::size_t i = index(iz, ix);
            double d = 0.0;  // depth into the sponge, in nodes
            if (ix < pad_side_) d = std::max(d, static_cast<double>(pad_side_ - ix));
            if (ix >= pad_side_ + model_nx_) d = std::max(d, static_cast<double>(ix - (pad_side_ + model_nx_ - 1)));
            if (iz < pad_top_) d = std::max(d, static_cast<double>(pad_top_ - iz));
            if (iz >= pad_top_ + model_nz_) d = std::max(d, static_cast<double>(iz - (pad_top_ + model_nz_ - 1)));
            const double sigma = sigma_max * (d / width) * (d / width);
            const double a = 0.5 * sigma * dt_;
            const double m = padded_m[i];
            m_[i] = m;
            damp_[i] = a;
            two_m_[i] = 2.0 * m;
            lag_coef_[i] = m * (1.0 - a);
            inv_diag_[i] = 1.0 / (m * (1.0 + a));
        }
    }
}

void Propagator::laplacian(const double* u, double* out) const noexcept {
    const double idx2 = 1.0 / (dx_ * dx_);
    const double idz2 = 1.0 / (dz_ * dz_);
    const std::size_t s = stride_;
    if (order_ == 2) {
        for (std::size_t iz = 0; iz < nzp_; ++iz) {
            const std::size_t base = index(iz, 0);
            for (std::size_t ix = 0; ix < nxp_; ++ix) {
                const std::size_t i = base + ix;
                const double c = u[i];
                out[i] = (u[i + 1] - 2.0 * c + u[i - 1]) * idx2 + (u[i + s] - 2.0 * c + u[i - s]) * idz2;
            }
        }
    } else {
        const double c0 = -30.0 / 12.0, c1 = 16.0 / 12.0, c2 = -1.0 / 12.0;
        for (std::size_t iz = 0; iz < nzp_; ++iz) {
            const std::size_t base = index(iz, 0);
            for (std::size_t ix = 0; ix < nxp_; ++ix) {
                const std::size_t i = base + ix;
                const double c = u[i];
                const double lx = c0 * c + c1 * (u[i + 1] + u[i - 1]) + c2 * (u[i + 2] + u[i - 2]);
                const double lz = c0 * c + c1 * (u[i + s] + u[i - s]) + c2 * (u[i + 2 * s] + u[i - 2 * s]);
                out[i] = lx * idx2 + lz * idz2;
            }
        }
    }
}

void Propagator::step(const double* prev, const double* cur, double* next) const noexcept {
    double* lap = lap_.data();
    laplacian(cur, lap);
    const double dt2 = dt_ * dt_;
    for (std::size_t iz = 0; iz < nzp_; ++iz) {
        const std::size_t base = index(iz, 0);
        for (std::size_t ix = 0; ix < nxp_; ++ix) {
            const std::size_t i = base + ix;
            next[i] = (two_m_[i] * cur[i] - lag_coef_[i] * prev[i] + dt2 * lap[i]) * inv_diag_[i];
        }
    }
}

std::vector<Propagator::Tap> Propagator::stencil(Point2 p, Injection mode) const {
    const double px = (p.x - x0_) / dx_ + static_cast<double>(pad_side_);
    const double pz = (p.z - z0_) / dz_ + static_cast<double>(pad_top_);
    if (mode == Injection::nearest) {
        const auto ix = static_cast<std::size_t>(std::clamp(std::lround(px), 0L, static_cast<long>(nxp_ - 1)));
        const auto iz = static_cast<std::size_t>(std::clamp(std::lround(pz), 0L, static_cast<long>(nzp_ - 1)));
        return {Tap{index(iz, ix), 1.0}};
    }
    auto floor_clamped = [](double v, std::size_t n) {
        const long f = static_cast<long>(std::floor(v));
        return static_cast<std::size_t>(std::clamp(f, 0L, static_cast<long>(n) - 2));
    };
    const std::size_t ix = floor_clamped(px, nxp_);
    const std::size_t iz = floor_clamped(pz, nzp_);
    const double fx = std::clamp(px - static_cast<double>(ix), 0.0, 1.0);
    const double fz = std::clamp(pz - static_cast<double>(iz), 0.0, 1.0);
    std::vector<Tap> taps;
    auto add = [&](std::size_t z, std::size_t x, double w) {
        if (w != 0.0) taps.push_back(Tap{index(z, x), w});
    };
    add(iz, ix, (1 - fx) * (1 - fz));
    add(iz, ix + 1, fx * (1 - fz));
    add(iz + 1, ix, (1 - fx) * fz);
    add(iz + 1, ix + 1, fx * fz);
    return taps;
}

double Propagator::sample(const double* field, std::span<const Tap> taps) const noexcept {
    double v = 0.0;
    for (const auto& t : taps) v += t.weight * field[t.index];
    return v;
}

void Propagator::inject(double* next, std::span<const Tap> taps, double value) const noexcept {
    const double scale = dt_ * dt_ / cell_area_;
    for (const auto& t : taps) add_row_forcing(next, t.index, scale * t.weight * value);
}

void Propagator::extract(const double* field, Array2D& out) const {
    if (out.rows() != model_nz_ || out.cols() != model_nx_) out = Array2D(model_nz_, model_nx_);
    for (std::size_t iz = 0; iz < model_nz_; ++iz)
        for (std::size_t ix = 0; ix < model_nx_; ++ix) out(iz, ix) = field[model_index(iz, ix)];
}

void Propagator::fold_to_model(const std::vector<double>& padded, Array2D& out) const {
    out = Array2D(model_nz_, model_nx_);
    for (std::size_t iz = 0; iz < nzp_; ++iz) {
        const std::size_t mz = std::min(iz < pad_top_ ? 0 : iz - pad_top_, model_nz_ - 1);
        for (std::size_t ix = 0; ix < nxp_; ++ix) {
            const std::size_t mx = std::min(ix < pad_side_ ? 0 : ix - pad_side_, model_nx_ - 1);
            out(mz, mx) += padded[index(iz, ix)];
        }
    }
}

std::vector<double> Propagator::expand_from_model(const Array2D& values) const {
    std::vector<double> out(field_size(), 0.0);
    for (std::size_t iz = 0; iz < nzp_; ++iz) {
        const std::size_t mz = std::min(iz < pad_top_ ? 0 : iz - pad_top_, model_nz_ - 1);
        for (std::size_t ix = 0; ix < nxp_; ++ix) {
            const std::size_t mx = std::min(ix < pad_side_ ? 0 : ix - pad_side_, model_nx_ - 1);
            out[index(iz, ix)] = values(mz, mx);
        }
    }
    return out;
}

double Propagator::energy(const double* cur, const double* next) const noexcept {
    double* lap = lap_.data();
    laplacian(cur, lap);
    double kinetic = 0.0, potential = 0.0;
    for (std::size_t iz = 0; iz < nzp_; ++iz) {
        for (std::size_t ix = 0; ix < nxp_; ++ix) {
            const std::size_t i = index(iz, ix);
            const double v = (next[i] - cur[i]) / dt_;
            kinetic += m_[i] * v * v;
            potential -= next[i] * lap[i];
        }
    }
    return kinetic + potential;
}

void check_cfl(const VelocityModel& model, const SimConfig& cfg, double dt) {
    if (!cfg.enforce_cfl) return;
    const double limit = max_stable_dt(model, cfg);
    if (dt > limit * (1.0 + 1e-12))
        throw StabilityError("time step " + std::to_string(dt) + " s exceeds the stable limit " +
                             std::to_string(limit) + " s");
}

ForwardHistory forward_history(const Propagator& prop, const TimeAxis& time, std::span<const PointSource> sources,
                               std::span<const Point2> receivers, std::size_t source_index) {
    const std::size_t nt = time.nt();
    std::vector<std::vector<Propagator::Tap>> src_taps, rec_taps;
    for (const auto& s : sources) {
        if (s.trace.size() != nt) throw ValidationError("forward_history: source trace length must equal nt");
        src_taps.push_back(prop.stencil(s.position, s.injection));
    }
    for (const auto& r : receivers) rec_taps.push_back(prop.stencil(r, Injection::bilinear));
    Array2D samples(receivers.size(), nt);
    std::vector<std::vector<double>> frames;
    frames.reserve(nt);
    frames.push_back(prop.make_field());
    const auto zero = prop.make_field();
    for (std::size_t k = 1; k < nt; ++k) {
        auto next = prop.make_field();
        const double* prev = k >= 2 ? frames[k - 2].data() : zero.data();
        prop.step(prev, frames[k - 1].data(), next.data());
        for (std::size_t s = 0; s < sources.size(); ++s) prop.inject(next.data(), src_taps[s], sources[s].trace[k - 1]);
        for (std::size_t r = 0; r < receivers.size(); ++r) samples(r, k) = prop.sample(next.data(), rec_taps[r]);
        frames.push_back(std::move(next));
    }
    for (double v : frames.back())
        if (!std::isfinite(v)) throw NumericalError("wavefield became non-finite");
    return ForwardHistory{std::move(frames), ShotRecord(time, std::move(samples), source_index)};
}

ForwardResult simulate(const VelocityModel& model, const TimeAxis& time, const SimConfig& cfg,
                       std::span<const PointSource> sources, std::span<const Point2> receivers,
                       bool keep_movie, std::size_t source_index) {
    cfg.validate();
    const auto& grid = model.grid();
    if (receivers.empty()) throw ValidationError("simulate: need at least one receiver");
    for (const auto& s : sources) {
        if (!grid.contains(s.position)) throw ValidationError("simulate: source outside the grid");
        if (s.trace.size() != time.nt()) throw ValidationError("simulate: source trace length must equal nt");
    }
    for (const auto& r : receivers)
        if (!grid.contains(r)) throw ValidationError("simulate: receiver outside the grid");
    check_cfl(model, cfg, time.dt());

    const Propagator prop(model, cfg, time.dt());
    std::vector<std::vector<Propagator::Tap>> src_taps, rec_taps;
    for (const auto& s : sources) src_taps.push_back(prop.stencil(s.position, s.injection));
    for (const auto& r : receivers) rec_taps.push_back(prop.stencil(r, Injection::bilinear));

    const std::size_t nt = time.nt();
    Array2D samples(receivers.size(), nt);

    std::optional<WavefieldMovie> movie;
    std::size_t movie_stride = 1;
    if (keep_movie) {
        const std::size_t frame_bytes = grid.cells() * sizeof(double);
        const std::size_t total = frame_bytes * nt;
        movie_stride = std::max<std::size_t>(1, (total + cfg.movie_memory_cap - 1) / cfg.movie_memory_cap);
        movie.emplace(grid, time, movie_stride);
        movie->frames().reserve(WavefieldMovie::expected_frames(nt, movie_stride));
        movie->frames().emplace_back(grid.nz(), grid.nx());  // u^0 = 0
    }

    auto prev = prop.make_field();
    auto cur = prop.make_field();
    auto next = prop.make_field();
    for (std::size_t k = 1; k < nt; ++k) {
        prop.step(prev.data(), cur.data(), next.data());
        for (std::size_t s = 0; s < sources.size(); ++s) prop.inject(next.data(), src_taps[s], sources[s].trace[k - 1]);
        for (std::size_t r = 0; r < receivers.size(); ++r) samples(r, k) = prop.sample(next.data(), rec_taps[r]);
        if (k % 64 == 0 || k + 1 == nt) {
            double probe = 0.0;
            for (double v : next) probe += v * v;
            if (!std::isfinite(probe))
                throw NumericalError("wavefield became non-finite at step " + std::to_string(k));
        }
        if (movie && k % movie_stride == 0) {
            movie->frames().emplace_back();
            prop.extract(next.data(), movie->frames().back());
        }
        std::swap(prev, cur);
        std::swap(cur, next);
    }
    return ForwardResult{ShotRecord(time, std::move(samples), source_index), std::move(movie)};
}

ForwardResult forward(const VelocityModel& model, const Acquisition& acq, const TimeAxis& time,
                      const SimConfig& cfg, std::size_t source_index, bool keep_movie) {
    if (source_index >= acq.sources().size())
        throw ValidationError("forward: source index " + std::to_string(source_index) + " out of range");
    acq.validate(model.grid());
    const auto wavelet = ricker(time, acq.wavelet());
    const PointSource src{acq.sources()[source_index], wavelet, Injection::nearest};
    return simulate(model, time, cfg, std::span(&src, 1), acq.receivers(), keep_movie, source_index);
}

}  // namespace fwi::wave
