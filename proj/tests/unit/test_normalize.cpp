#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fwi/errors.hpp"
#include "fwi/normalize.hpp"
#include "fwi/rng.hpp"

using namespace fwi;
using namespace fwi::normalize;

namespace {

std::vector<double> ricker_samples(const TimeAxis& t, double freq, double delay) {
    std::vector<double> f(t.nt());
    for (std::size_t i = 0; i < t.nt(); ++i) {
        const double a = M_PI * freq * (t.time(i) - delay);
        f[i] = (1.0 - 2.0 * a * a) * std::exp(-a * a);
    }
    return f;
}

std::vector<double> random_signal(std::size_t n, std::uint64_t seed, double lo, double hi) {
    SplitMix64 rng(seed);
    std::vector<double> f(n);
    for (auto& v : f) v = rng.uniform(lo, hi);
    return f;
}

// J(p) = 1/2 sum (p - q)^2 dt through the whole raw -> density pipeline, parameters frozen
double toy_objective(const std::vector<double>& raw, const ScaleParams& p, const std::vector<double>& q,
                     const TimeAxis& t) {
    const auto d = to_density(scale(raw, p).values, t);
    double j = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) j += 0.5 * (d.density.p[i] - q[i]) * (d.density.p[i] - q[i]) * t.dt();
    return j;
}

}  // namespace

TEST_CASE("linear offset from the Ricker minimum puts the minimum at the floor") {
    const TimeAxis t(501, 0.002);
    const auto f = ricker_samples(t, 10.0, 0.5);
    const double mn = *std::min_element(f.begin(), f.end());
    CHECK(mn == doctest::Approx(-2.0 * std::exp(-1.5)).epsilon(1e-3));
    const auto p = resolve(Normalization{}, f, f);
    CHECK(p.c == -mn);
    const auto s = scale(f, p);
    CHECK(*std::min_element(s.values.begin(), s.values.end()) == doctest::Approx(p.floor).epsilon(1e-6));
    for (double j : s.jac) CHECK(j == 1.0);
}

TEST_CASE("sign-sensitive scaling is C1 at zero") {
    const ScaleParams p{Kind::sign_sensitive, 3.0, 1e-9};
    const double eps = 1e-7;
    const auto s = scale(std::vector<double>{-eps, 0.0, eps}, p);
    CHECK(s.values[1] - p.floor == doctest::Approx(1.0 / 3.0));
    CHECK(s.values[0] == doctest::Approx(s.values[1]).epsilon(1e-6));
    CHECK(s.values[2] == doctest::Approx(s.values[1]).epsilon(1e-6));
    CHECK(s.jac[1] == 1.0);
    CHECK(s.jac[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("exponential scaling is close to linear for small c") {
    const TimeAxis t(301, 0.002);
    const auto f = ricker_samples(t, 12.0, 0.3);
    const double c = 0.01;
    const auto s = scale(f, ScaleParams{Kind::exponential, c, 1e-15});
    double fmax2 = 0.0, fmax = 0.0;
    for (double v : f) {
        fmax2 = std::max(fmax2, v * v);
        fmax = std::max(fmax, std::abs(v));
    }
    const double bound = c * c * fmax2 / 2.0 * std::exp(c * fmax);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(s.values[i] - 1e-15 - (1.0 + c * f[i])) <= bound);
}

TEST_CASE("default parameters") {
    const std::vector<double> sim{0.1, -0.3, 2.0}, obs{-0.5, 4.0, 1.0};
    CHECK(resolve(Normalization{Kind::linear, 0.2, 0.0, false}, sim, obs).c == 0.5);
    CHECK(resolve(Normalization{Kind::linear, 0.9, 0.0, false}, sim, obs).c == 0.9);
    CHECK(resolve(Normalization{Kind::exponential, 0.0, 0.0, false}, sim, obs).c == 0.25);
    CHECK(resolve(Normalization{Kind::sign_sensitive, 0.0, 0.0, false}, sim, obs).c == 0.25);
    const auto p = resolve(Normalization{Kind::square, 0.0, 0.0, false}, sim, obs);
    CHECK(p.floor == doctest::Approx(1e-8 * (0.25 + 16.0 + 1.0) / 3.0));
    CHECK(resolve(Normalization{Kind::linear, 0.0, 0.5, false}, sim, obs).floor == 0.5);
}

TEST_CASE("parameter errors") {
    CHECK_THROWS_AS(Normalization({Kind::linear, -1.0, 0.0, false}).validate(), ParameterError);
    CHECK_THROWS_AS(Normalization({Kind::linear, 0.0, std::nan(""), false}).validate(), ParameterError);
    CHECK_THROWS_AS(scale(std::vector<double>{800.0}, ScaleParams{Kind::exponential, 1.0, 1e-9}), ParameterError);
    CHECK_THROWS_AS(scale(std::vector<double>{-2.0}, ScaleParams{Kind::linear, 1.0, 1e-9}), ParameterError);
    CHECK_THROWS_AS(scale(std::vector<double>{std::nan("")}, ScaleParams{Kind::linear, 1.0, 1e-9}), ValidationError);
    CHECK_THROWS_AS(to_density(std::vector<double>{1.0, 0.0}, TimeAxis(2, 0.1)), ValidationError);
}

TEST_CASE("to_density examples") {
    const TimeAxis t(200, 0.005);
    const auto c = to_density(std::vector<double>(200, 3.7), t);
    for (double v : c.density.p) CHECK(v == doctest::Approx(1.0 / (200 * 0.005)));
    CHECK(c.mass == doctest::Approx(3.7 * 200 * 0.005));

    const auto f = random_signal(200, 11, 0.01, 2.0);
    auto f2 = f;
    for (auto& v : f2) v *= 2.0;
    const auto a = to_density(f, t), b = to_density(f2, t);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(a.density.p[i] == doctest::Approx(b.density.p[i]).epsilon(1e-14));
    const double m = std::accumulate(a.density.p.begin(), a.density.p.end(), 0.0) * t.dt();
    CHECK(std::abs(m - 1.0) <= 1e-12);
}

TEST_CASE("positivity and unit mass for random data, every kind") {
    const TimeAxis t(400, 0.001);
    for (Kind k : {Kind::linear, Kind::exponential, Kind::sign_sensitive, Kind::square})
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const auto sim = random_signal(400, seed, -3.0, 2.0);
            const auto obs = random_signal(400, seed + 100, -1.0, 5.0);
            const auto p = resolve(Normalization{k, 0.0, 0.0, false}, sim, obs);
            for (const auto* raw : {&sim, &obs}) {
                const auto s = scale(*raw, p);
                for (double v : s.values) CHECK(v > 0.0);
                const auto d = to_density(s.values, t);
                double m = 0.0;
                for (double v : d.density.p) {
                    CHECK(v > 0.0);
                    m += v * t.dt();
                }
                CHECK(std::abs(m - 1.0) <= 1e-12);
            }
        }
}

TEST_CASE("elementwise kinds commute with time shifts") {
    const auto f = random_signal(300, 5, -2.0, 2.0);
    for (Kind k : {Kind::exponential, Kind::sign_sensitive}) {
        const ScaleParams p{k, 0.7, 1e-6};
        for (int shift : {1, 17, 150}) {
            auto g = f;
            std::rotate(g.begin(), g.begin() + shift, g.end());
            const auto sf = scale(f, p).values;
            auto shifted = sf;
            std::rotate(shifted.begin(), shifted.begin() + shift, shifted.end());
            CHECK(scale(g, p).values == shifted);
        }
    }
}

TEST_CASE("chain rule annihilates constant adjoints under linear scaling") {
    const TimeAxis t(250, 0.004);
    const auto raw = random_signal(250, 3, -1.0, 1.0);
    const auto s = scale(raw, resolve(Normalization{}, raw, raw));
    const auto d = to_density(s.values, t);
    const auto out = chain_rule(std::vector<double>(250, 2.5), s.jac, d.mass, d.density);
    for (double v : out) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("chain rule formula with unit mass") {
    const TimeAxis t(100, 0.01);
    const auto dens = to_density(random_signal(100, 8, 0.1, 1.0), t).density;
    const auto a = random_signal(100, 9, -1.0, 1.0);
    double mean = 0.0;
    for (std::size_t i = 0; i < 100; ++i) mean += a[i] * dens.p[i] * t.dt();
    const auto out = chain_rule(a, std::vector<double>(100, 1.0), 1.0, dens);
    for (std::size_t i = 0; i < 100; ++i) CHECK(out[i] == doctest::Approx(a[i] - mean).epsilon(1e-13));
    CHECK_THROWS_AS(chain_rule(std::vector<double>(99), std::vector<double>(100), 1.0, dens), ValidationError);
}

TEST_CASE("chain rule matches finite differences for every kind") {
    const TimeAxis t(120, 0.01);
    auto raw = random_signal(120, 21, -1.0, 1.0);
    // keep samples away from the sign-sensitive kink
    for (auto& v : raw)
        if (std::abs(v) < 0.05) v += 0.1;
    const auto q = to_density(random_signal(120, 22, 0.5, 1.5), t).density.p;

    for (Kind k : {Kind::linear, Kind::exponential, Kind::sign_sensitive, Kind::square}) {
        CAPTURE(static_cast<int>(k));
        const auto p = resolve(Normalization{k, 0.0, 0.0, false}, raw, raw);
        const auto s = scale(raw, p);
        const auto d = to_density(s.values, t);
        std::vector<double> a(120);
        for (std::size_t i = 0; i < 120; ++i) a[i] = (d.density.p[i] - q[i]) * t.dt();
        const auto grad = chain_rule(a, s.jac, d.mass, d.density);
        for (std::size_t i : {0u, 7u, 45u, 88u, 119u}) {
            const double h = 1e-6;
            auto up = raw, dn = raw;
            up[i] += h;
            dn[i] -= h;
            const double fd = (toy_objective(up, p, q, t) - toy_objective(dn, p, q, t)) / (2.0 * h);
            CHECK(std::abs(fd - grad[i]) <= 1e-6 * std::abs(grad[i]) + 1e-14);
        }
    }
}
