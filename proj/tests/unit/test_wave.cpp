#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "fwi/errors.hpp"
#include "fwi/rng.hpp"
#include "fwi/wave.hpp"

using namespace fwi;
using namespace fwi::wave;

namespace {

double rel_l2(std::span<const double> a, std::span<const double> b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

// Index of the first sample whose magnitude exceeds `frac` of the trace maximum.
std::size_t first_break(std::span<const double> trace, double frac = 0.01) {
    double peak = 0.0;
    for (double v : trace) peak = std::max(peak, std::abs(v));
    for (std::size_t i = 0; i < trace.size(); ++i)
        if (std::abs(trace[i]) > frac * peak) return i;
    return trace.size();
}

// Plain O(n^2) DFT magnitude at bin k.
double dft_magnitude(const std::vector<double>& x, std::size_t k) {
    std::complex<double> acc = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / n);
    return std::abs(acc);
}

SimConfig small_config(int order = 4) {
    SimConfig cfg;
    cfg.spatial_order = order;
    cfg.sponge_width = 20;
    return cfg;
}

}  // namespace

TEST_CASE("ricker peak and zero mean") {
    const TimeAxis t(1001, 0.001);
    SourceWavelet w;
    w.peak_frequency = 15.0;
    w.delay = 0.5;
    const auto r = ricker(t, w);
    CHECK(r[500] == doctest::Approx(1.0).epsilon(1e-14));
    double sum = 0.0;
    for (double v : r) sum += v * t.dt();
    CHECK(std::abs(sum) < 1e-6 * 1.0 * t.length());
    CHECK(*std::max_element(r.begin(), r.end()) == doctest::Approx(1.0));
}

TEST_CASE("ricker spectrum peaks at the peak frequency") {
    const TimeAxis t(4096, 0.001);
    SourceWavelet w;
    w.peak_frequency = 15.0;
    w.delay = 0.2;
    const auto r = ricker(t, w);
    const double df = 1.0 / t.length();
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t k = 1; k < 200; ++k) {
        const double m = dft_magnitude(r, k);
        if (m > best_mag) {
            best_mag = m;
            best = k;
        }
    }
    CHECK(std::abs(static_cast<double>(best) * df - 15.0) <= df);
}

TEST_CASE("high-pass removes low frequencies and keeps the band") {
    const TimeAxis t(4096, 0.001);
    std::vector<double> low(t.nt()), high(t.nt());
    for (std::size_t i = 0; i < t.nt(); ++i) {
        low[i] = std::sin(2.0 * std::numbers::pi * 0.5 * t.time(i));
        high[i] = std::sin(2.0 * std::numbers::pi * 20.0 * t.time(i));
    }
    auto low_f = low, high_f = high;
    highpass_zero_phase(low_f, t.dt(), 2.0);
    highpass_zero_phase(high_f, t.dt(), 2.0);
    auto mid_rms = [](const std::vector<double>& x) {
        double s = 0.0;
        for (std::size_t i = 1000; i < 3000; ++i) s += x[i] * x[i];
        return std::sqrt(s / 2000.0);
    };
    CHECK(mid_rms(low_f) < 0.01 * mid_rms(low));
    CHECK(mid_rms(high_f) == doctest::Approx(mid_rms(high)).epsilon(0.01));
    // zero phase: the filtered band signal stays aligned with the input
    CHECK(rel_l2(std::span(high_f).subspan(1000, 2000), std::span(high).subspan(1000, 2000)) < 0.02);
}

TEST_CASE("max stable dt formula and scaling") {
    const Grid2D g(10, 10, 10.0, 10.0);
    SimConfig cfg;
    cfg.spatial_order = 2;
    cfg.cfl_safety = 0.9;
    const auto m1 = VelocityModel::constant_velocity(g, 1500.0);
    CHECK(max_stable_dt(m1, cfg) == doctest::Approx(0.9 * 10.0 / (1500.0 * std::sqrt(2.0))).epsilon(1e-14));
    const auto m2 = VelocityModel::constant_velocity(g, 3000.0);
    CHECK(max_stable_dt(m2, cfg) == doctest::Approx(0.5 * max_stable_dt(m1, cfg)).epsilon(1e-14));
    cfg.spatial_order = 4;
    CHECK(max_stable_dt(m1, cfg) == doctest::Approx(0.9 * std::sqrt(3.0 / 8.0) * 10.0 / 1500.0).epsilon(1e-14));
}

TEST_CASE("time step above the stable limit is rejected") {
    const Grid2D g(20, 20, 10.0, 10.0);
    const auto model = VelocityModel::constant_velocity(g, 2000.0);
    const auto cfg = small_config();
    const double dt = 1.01 * max_stable_dt(model, cfg) / cfg.cfl_safety;
    const Acquisition acq({{100, 100}}, {{50, 50}}, SourceWavelet{});
    CHECK_THROWS_AS(forward(model, acq, TimeAxis(10, dt), cfg, 0), StabilityError);
    CHECK_THROWS_AS(forward(model, acq, TimeAxis(10, 1e-4), cfg, 1), ValidationError);
    const Acquisition outside({{100, 100}}, {{500, 50}}, SourceWavelet{});
    CHECK_THROWS_AS(forward(model, outside, TimeAxis(10, 1e-4), cfg, 0), ValidationError);
}

TEST_CASE("stepping just above the limit grows without bound") {
    SplitMix64 rng(5);
    const Grid2D g(40, 40, 10.0, 10.0);
    Array2D c(40, 40);
    for (auto& v : c.values()) v = rng.uniform(1800.0, 2200.0);
    const auto model = VelocityModel::from_velocity(g, c);
    auto cfg = small_config(2);
    cfg.cfl_safety = 0.999999;
    cfg.enforce_cfl = false;
    const double dt = 1.05 * max_stable_dt(model, cfg);
    SourceWavelet w;
    w.peak_frequency = 15.0;
    w.delay = 0.08;

    // After 500 steps the record has grown by many orders of magnitude versus a stable run.
    const Acquisition acq({{200, 200}}, {{250, 250}}, w);
    auto stable_cfg = cfg;
    stable_cfg.cfl_safety = 0.9;
    const double stable_dt = max_stable_dt(model, stable_cfg);
    const auto stable = forward(model, acq, TimeAxis(500, stable_dt), stable_cfg, 0);
    const auto unstable = forward(model, acq, TimeAxis(500, dt), cfg, 0);
    auto peak = [](const ShotRecord& r) {
        double p = 0.0;
        for (double v : r.samples().values()) p = std::max(p, std::abs(v));
        return p;
    };
    CHECK(peak(unstable.record) > 1e30 * peak(stable.record));

    // Overflow to non-finite values follows once the growth has run its course.
    CHECK_THROWS_AS(forward(model, acq, TimeAxis(2000, dt), cfg, 0), NumericalError);
}

TEST_CASE("zero wavelet gives an identically zero record") {
    const Grid2D g(30, 30, 10.0, 10.0);
    const auto model = VelocityModel::constant_velocity(g, 2000.0);
    const auto cfg = small_config();
    const TimeAxis t(200, 0.002);
    const std::vector<double> zero(t.nt(), 0.0);
    const PointSource src{{150, 150}, zero};
    const Point2 rec[] = {{100, 100}, {200, 250}};
    const auto res = simulate(model, t, cfg, std::span(&src, 1), rec);
    for (double v : res.record.samples().values()) CHECK(v == 0.0);
}

TEST_CASE("first break matches geometric travel time") {
    const Grid2D g(121, 61, 5.0, 5.0);
    const auto model = VelocityModel::constant_velocity(g, 2000.0);
    const auto cfg = small_config();
    const TimeAxis t(500, 0.001);
    SourceWavelet w;
    w.peak_frequency = 15.0;
    w.delay = 0.1;
    const Acquisition acq({{100, 150}}, {{500, 150}}, w);
    const auto res = forward(model, acq, t, cfg, 0);
    const auto wave = ricker(t, w);
    // onset of the record minus onset of the emitted wavelet
    const double pick = t.time(first_break(res.record.trace(0)));
    const double emitted = t.time(first_break(wave));
    const double expected = 400.0 / 2000.0 + emitted;
    CHECK(std::abs(pick - expected) <= 2.0 * t.dt() + 1e-12);
}

TEST_CASE("halving the grid and time step changes the trace by less than 10 percent") {
    auto run = [](std::size_t refine) {
        const double h = 20.0 / static_cast<double>(refine);
        const std::size_t n = 40 * refine + 1;
        const Grid2D g(n, n, h, h);
        Array2D c(n, n);
        for (std::size_t iz = 0; iz < n; ++iz)
            for (std::size_t ix = 0; ix < n; ++ix) c(iz, ix) = 2000.0 + 0.5 * g.z(iz);
        const auto model = VelocityModel::from_velocity(g, c);
        auto cfg = small_config();
        cfg.sponge_width = 20 * refine;
        const double dt = 0.002 / static_cast<double>(refine);
        const TimeAxis t(400 * refine + 1, dt);
        SourceWavelet w;
        w.peak_frequency = 8.0;
        w.delay = 0.15;
        const Acquisition acq({{200, 200}}, {{600, 500}}, w);
        const auto rec = forward(model, acq, t, cfg, 0).record;
        std::vector<double> coarse;
        for (std::size_t i = 0; i < rec.nt(); i += refine) coarse.push_back(rec.trace(0)[i]);
        return coarse;
    };
    const auto a = run(1);
    const auto b = run(2);
    CHECK(rel_l2(a, b) < 0.10);
}

TEST_CASE("response is linear in the source") {
    SplitMix64 rng(3);
    const Grid2D g(30, 25, 10.0, 10.0);
    Array2D c(25, 30);
    for (auto& v : c.values()) v = rng.uniform(1500.0, 2500.0);
    const auto model = VelocityModel::from_velocity(g, c);
    const auto cfg = small_config();
    const TimeAxis t(300, 0.001);
    std::vector<double> s(t.nt());
    for (auto& v : s) v = rng.normal();
    auto s3 = s;
    for (auto& v : s3) v *= -3.7;
    const Point2 rec[] = {{20, 30}, {270, 200}};
    const PointSource a{{150, 100}, s};
    const PointSource b{{150, 100}, s3};
    const auto ra = simulate(model, t, cfg, std::span(&a, 1), rec).record;
    const auto rb = simulate(model, t, cfg, std::span(&b, 1), rec).record;
    std::vector<double> scaled = ra.samples().values();
    for (auto& v : scaled) v *= -3.7;
    CHECK(rel_l2(rb.samples().values(), scaled) < 1e-12);
}

TEST_CASE("source-receiver reciprocity on a homogeneous model") {
    const Grid2D g(50, 40, 10.0, 10.0);
    const auto model = VelocityModel::constant_velocity(g, 2000.0);
    const auto cfg = small_config();
    const TimeAxis t(400, 0.001);
    SourceWavelet w;
    w.peak_frequency = 20.0;
    w.delay = 0.06;
    const auto wave = ricker(t, w);
    const Point2 p{100, 120}, q{380, 290};
    const PointSource at_p{p, wave};
    const PointSource at_q{q, wave};
    const auto pq = simulate(model, t, cfg, std::span(&at_p, 1), std::span(&q, 1)).record;
    const auto qp = simulate(model, t, cfg, std::span(&at_q, 1), std::span(&p, 1)).record;
    CHECK(rel_l2(pq.trace(0), qp.trace(0)) < 0.01);
}

TEST_CASE("energy does not grow after the source switches off") {
    SplitMix64 rng(8);
    const Grid2D g(40, 40, 10.0, 10.0);
    Array2D c(40, 40);
    for (auto& v : c.values()) v = rng.uniform(1800.0, 2600.0);
    const auto model = VelocityModel::from_velocity(g, c);
    const auto cfg = small_config();
    const double dt = max_stable_dt(model, cfg);
    const TimeAxis t(800, dt);
    SourceWavelet w;
    w.peak_frequency = 20.0;
    w.delay = 0.06;
    const auto wave = ricker(t, w);
    const Propagator prop(model, cfg, dt);
    const auto taps = prop.stencil({200, 200}, Injection::nearest);
    auto prev = prop.make_field(), cur = prop.make_field(), next = prop.make_field();
    const std::size_t off = static_cast<std::size_t>(0.15 / dt);
    double last = std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (std::size_t k = 1; k < t.nt(); ++k) {
        prop.step(prev.data(), cur.data(), next.data());
        prop.inject(next.data(), taps, wave[k - 1]);
        if (k > off) {
            const double e = prop.energy(cur.data(), next.data());
            CHECK(e >= 0.0);
            if (e > last * (1.0 + 1e-12)) monotone = false;
            last = e;
        }
        std::swap(prev, cur);
        std::swap(cur, next);
    }
    CHECK(monotone);
    CHECK(last < 1e-2 * [&] {
        // energy right after switch-off, for a sense of the absorption
        auto p0 = prop.make_field(), c0 = prop.make_field(), n0 = prop.make_field();
        double e = 0.0;
        for (std::size_t k = 1; k <= off + 1; ++k) {
            prop.step(p0.data(), c0.data(), n0.data());
            prop.inject(n0.data(), taps, wave[k - 1]);
            e = prop.energy(c0.data(), n0.data());
            std::swap(p0, c0);
            std::swap(c0, n0);
        }
        return e;
    }());
}

TEST_CASE("movie frames follow the stride and capture the record") {
    const Grid2D g(30, 30, 10.0, 10.0);
    const auto model = VelocityModel::constant_velocity(g, 2000.0);
    auto cfg = small_config();
    const TimeAxis t(101, 0.002);
    const Acquisition acq({{150, 150}}, {{100, 100}}, SourceWavelet{});
    auto res = forward(model, acq, t, cfg, 0, true);
    REQUIRE(res.movie.has_value());
    CHECK(res.movie->stride() == 1);
    CHECK(res.movie->frame_count() == 101);
    CHECK(res.movie->frame(60)(10, 10) == doctest::Approx(res.record.trace(0)[60]).epsilon(1e-12));

    cfg.movie_memory_cap = 30 * 30 * 8 * 30;  // room for ~30 frames
    res = forward(model, acq, t, cfg, 0, true);
    CHECK(res.movie->stride() == 4);
    CHECK(res.movie->frame_count() == WavefieldMovie::expected_frames(101, 4));
    CHECK(res.movie->frame_count() == 26);
    for (const auto& f : res.movie->frames()) CHECK(f.all_finite());
}

TEST_CASE("sponge keeps boundary reflections small") {
    const Grid2D small(81, 81, 10.0, 10.0);
    const Grid2D big(281, 281, 10.0, 10.0, -1000.0, -1000.0);
    const SimConfig cfg;
    const TimeAxis t(700, 0.001);
    SourceWavelet w;
    w.peak_frequency = 15.0;
    w.delay = 0.08;
    const Acquisition acq({{400, 400}}, {{200, 400}}, w);
    const auto a = forward(VelocityModel::constant_velocity(small, 2000.0), acq, t, cfg, 0).record;
    const auto b = forward(VelocityModel::constant_velocity(big, 2000.0), acq, t, cfg, 0).record;
    CHECK(rel_l2(a.trace(0), b.trace(0)) < 0.05);
}
