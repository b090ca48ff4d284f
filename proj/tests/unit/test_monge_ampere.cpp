#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "fwi/errors.hpp"
#include "fwi/monge_ampere.hpp"
#include "fwi/ot1d.hpp"
#include "fwi/rng.hpp"

using namespace fwi;
using namespace fwi::ma;

namespace {

Density2D density_from(std::size_t n, const std::function<double(double, double)>& fn) {
    const auto g = unit_grid(n);
    Array2D v(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) v(j, i) = fn(g.x(i), g.z(j));
    return make_density(g, std::move(v));
}

Array2D field_from(std::size_t n, const std::function<double(double, double)>& fn) {
    const auto g = unit_grid(n);
    Array2D v(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) v(j, i) = fn(g.x(i), g.z(j));
    return v;
}

double half_square(double x1, double x2) { return 0.5 * (x1 * x1 + x2 * x2); }

// u* = |x|^2/2 + A exp(-|x - c|^2 / s), convex for 2A/s < 1; with f = 1 the target density is
// g(grad u*(x)) = 1 / det D^2 u*(x).
struct Manufactured {
    double A = 0.002, s = 0.02;

    double bump(double x1, double x2) const {
        const double d1 = x1 - 0.5, d2 = x2 - 0.5;
        return A * std::exp(-(d1 * d1 + d2 * d2) / s);
    }
    double u(double x1, double x2) const { return half_square(x1, x2) + bump(x1, x2); }
    void grad(double x1, double x2, double& y1, double& y2) const {
        const double b = bump(x1, x2);
        y1 = x1 - 2.0 * b * (x1 - 0.5) / s;
        y2 = x2 - 2.0 * b * (x2 - 0.5) / s;
    }
    double det(double x1, double x2) const {
        const double b = bump(x1, x2), d1 = x1 - 0.5, d2 = x2 - 0.5;
        const double h11 = 1.0 + b * (4.0 * d1 * d1 / (s * s) - 2.0 / s);
        const double h22 = 1.0 + b * (4.0 * d2 * d2 / (s * s) - 2.0 / s);
        const double h12 = b * 4.0 * d1 * d2 / (s * s);
        return h11 * h22 - h12 * h12;
    }
    // g at y: invert the map by fixed-point iteration (it is a small perturbation of the identity)
    double target(double y1, double y2) const {
        double x1 = y1, x2 = y2;
        for (int it = 0; it < 200; ++it) {
            double a, b;
            grad(x1, x2, a, b);
            x1 -= a - y1;
            x2 -= b - y2;
        }
        return 1.0 / det(x1, x2);
    }
};

double gaussian(double x1, double x2, double c1, double c2, double sigma) {
    const double d1 = x1 - c1, d2 = x2 - c2;
    return std::exp(-(d1 * d1 + d2 * d2) / (2.0 * sigma * sigma));
}

// Gaussian on the square plus a background of 1e-3 of its peak so that the density stays positive.
Density2D blob(std::size_t n, double c1, double c2, double sigma = 0.08) {
    return density_from(n, [&](double x1, double x2) { return gaussian(x1, x2, c1, c2, sigma) + 1e-3; });
}

Array2D zero_mean_perturbation(const Grid2D& grid, std::uint64_t seed, bool smooth) {
    SplitMix64 rng(seed);
    const std::size_t n = grid.nx();
    Array2D d(n, n);
    if (smooth) {
        const double a = rng.uniform(0.5, 1.5), b = rng.uniform(0.5, 1.5), p = rng.uniform(0.0, 6.0);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i)
                d(j, i) = std::cos(M_PI * a * grid.x(i) + p) * std::cos(M_PI * b * grid.z(j));
    } else {
        for (auto& v : d.values()) v = rng.uniform(-1.0, 1.0);
    }
    const auto w = trapezoid_weights(grid);
    double mean = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) mean += d.values()[k] * w.values()[k];
    for (auto& v : d.values()) v -= mean;  // total weight is 1
    return d;
}

double weighted_dot(const Array2D& a, const Array2D& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a.values()[k] * b.values()[k];
    return s;
}

bool on_boundary(std::size_t i, std::size_t j, std::size_t n) { return i == 0 || j == 0 || i == n - 1 || j == n - 1; }

double u_error(const Array2D& u, const Manufactured& m) {
    const std::size_t n = u.rows();
    const auto g = unit_grid(n);
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) mean += u(j, i) - m.u(g.x(i), g.z(j));
    mean /= static_cast<double>(n * n);
    double e = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) e = std::max(e, std::abs(u(j, i) - m.u(g.x(i), g.z(j)) - mean));
    return e;
}

}  // namespace

TEST_CASE("grid helpers") {
    const auto g = unit_grid(11);
    CHECK(g.dx() == doctest::Approx(0.1));
    const auto w = trapezoid_weights(g);
    double s = 0.0;
    for (double v : w.values()) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    const auto d = density_from(11, [](double x1, double x2) { return 1.0 + x1 * x2; });
    CHECK(weighted_dot(d.p, w) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(make_density(g, Array2D(11, 11, 0.0)), ValidationError);
    CHECK_THROWS_AS(MaParams{.damping = 1.5}.validate(), ParameterError);
    CHECK_THROWS_AS(MaParams{.delta = -1.0}.validate(), ParameterError);
}

TEST_CASE("identity potential solves the balanced problem") {
    const std::size_t n = 33;
    const auto f = density_from(n, [](double, double) { return 1.0; });
    const auto r = ma_residual(field_from(n, half_square), f, f, MaParams{});
    const double h = f.grid.dx();
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            if (on_boundary(i, j, n))
                CHECK(std::abs(r(j, i)) <= 1e-12);
            else
                CHECK(std::abs(r(j, i)) <= h);
        }
}

TEST_CASE("negative curvature activates the negative-part terms") {
    const double delta = 0.01;
    CHECK(variational_determinant(-1.0, 2.0, delta) <= 0.0);
    CHECK(variational_determinant(-1.0, 2.0, delta) == doctest::Approx(2.0 * delta - 1.0 + delta));
    CHECK(variational_determinant(1.5, 2.0, delta) == doctest::Approx(3.0 + 2.0 * delta));
    CHECK(variational_determinant(-0.5, -0.5, delta) == doctest::Approx(delta * delta - 1.0));

    // a saddle node in an otherwise convex potential gives a large positive monotone residual
    const std::size_t n = 17;
    const auto f = density_from(n, [](double, double) { return 1.0; });
    auto u = field_from(n, half_square);
    const double h = f.grid.dx();
    u(8, 5) += 2.0 * h * h;  // x1 second difference at (5, 8) becomes 1 - 4 < 0
    u(7, 5) -= 3.0 * h * h;
    u(9, 5) -= 3.0 * h * h;
    const auto r = ma_residual(u, f, f, MaParams{});
    CHECK(r(8, 5) > 0.5);
}

TEST_CASE("filter keeps the monotone branch when the two operators disagree") {
    const double eps = 0.1;
    CHECK(filtered_operator(1.0, 1.05, eps) == doctest::Approx(1.05));
    CHECK(filtered_operator(1.0, 1.2, eps) == 1.0);
    CHECK(filtered_operator(1.0, 0.7, eps) == 1.0);
    CHECK(filtered_operator(1.0, 1.15, eps) == doctest::Approx(1.05));
    SplitMix64 rng(3);
    for (int k = 0; k < 1000; ++k) {
        const double mm = rng.uniform(-5.0, 5.0), mn = rng.uniform(-5.0, 5.0), e = rng.uniform(0.01, 1.0);
        if (std::abs(mn - mm) >= 2.0 * e) CHECK(filtered_operator(mm, mn, e) == mm);
        CHECK(std::abs(filtered_operator(mm, mn, e) - mm) <= e);
    }
}

TEST_CASE("manufactured potential has an O(h) residual") {
    const Manufactured m;
    std::vector<double> res;
    for (std::size_t n : {33u, 65u, 129u}) {
        const auto f = density_from(n, [](double, double) { return 1.0; });
        const auto g = density_from(n, [&](double y1, double y2) { return m.target(y1, y2); });
        const double c = m.bump(0.5, 0.5);  // shift so the pinned value carries no gauge offset
        const auto u = field_from(n, [&](double x1, double x2) { return m.u(x1, x2) - c; });
        const auto r = ma_residual(u, f, g, MaParams{});
        double worst = 0.0;
        for (double v : r.values()) worst = std::max(worst, std::abs(v));
        res.push_back(worst);
        CHECK(worst <= 1.0 * f.grid.dx());
    }
    CHECK(res[2] < res[0]);
}

TEST_CASE("equal densities give the identity map") {
    const std::size_t n = 33;
    const auto f = blob(n, 0.45, 0.55, 0.15);
    const auto sol = ma_solve(f, f);
    CHECK(sol.residual_norm <= 1e-9);
    CHECK(sol.pinned_index == 16 * 33 + 16);
    const auto [d1, d2] = map_of(sol.u, f.grid);
    const double h = f.grid.dx();
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(d1(j, i) - f.grid.x(i)) <= 2.0 * h);
            CHECK(std::abs(d2(j, i) - f.grid.z(j)) <= 2.0 * h);
        }
    CHECK(w2_squared_2d(f, f, sol) <= h * h);
}

TEST_CASE("translated blob") {
    const std::size_t n = 65;
    const auto f = blob(n, 0.4, 0.5), g = blob(n, 0.6, 0.5);
    const auto sol = ma_solve(f, g);
    const auto [d1, d2] = map_of(sol.u, f.grid);
    const double h = f.grid.dx();
    double fmax = 0.0;
    for (double v : f.p.values()) fmax = std::max(fmax, v);
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
            if (f.p(j, i) > 0.1 * fmax)
                worst = std::max({worst, std::abs(d1(j, i) - f.grid.x(i) - 0.2), std::abs(d2(j, i) - f.grid.z(j))});
    CHECK(worst <= 5.0 * h);
    const double w = w2_squared_2d(f, g, sol);
    CHECK(w == doctest::Approx(0.04).epsilon(0.1));

    const auto grad = w2_gradient_2d(f, g, sol);
    std::vector<double> mags;
    for (double v : grad.values()) mags.push_back(std::abs(v));
    std::nth_element(mags.begin(), mags.begin() + static_cast<long>(mags.size() / 2), mags.end());
    const double median = mags[mags.size() / 2];
    const double mx = *std::max_element(grad.values().begin(), grad.values().end(),
                                        [](double a, double b) { return std::abs(a) < std::abs(b); });
    CHECK(std::abs(mx) <= 10.0 * median);
}

TEST_CASE("solver converges at second order on a manufactured solution") {
    const Manufactured m;
    std::vector<double> logh, loge;
    for (std::size_t n : {33u, 65u, 129u}) {
        const auto f = density_from(n, [](double, double) { return 1.0; });
        const auto g = density_from(n, [&](double y1, double y2) { return m.target(y1, y2); });
        const auto sol = ma_solve(f, g);
        logh.push_back(std::log(f.grid.dx()));
        loge.push_back(std::log(u_error(sol.u, m)));
    }
    const double mh = (logh[0] + logh[1] + logh[2]) / 3.0, me = (loge[0] + loge[1] + loge[2]) / 3.0;
    double num = 0.0, den = 0.0;
    for (int k = 0; k < 3; ++k) {
        num += (logh[k] - mh) * (loge[k] - me);
        den += (logh[k] - mh) * (logh[k] - mh);
    }
    const double order = num / den;
    MESSAGE("observed order " << order);
    CHECK(order >= 1.5);
}

TEST_CASE("separable densities match the sum of 1D distances") {
    const std::size_t n = 65;
    auto f1 = [](double x) { return std::exp(-std::pow((x - 0.35) / 0.12, 2)) + 0.05; };
    auto f2 = [](double x) { return 1.0 + 0.5 * std::sin(3.0 * x); };
    auto g1 = [](double x) { return std::exp(-std::pow((x - 0.55) / 0.15, 2)) + 0.05; };
    auto g2 = [](double x) { return std::exp(-std::pow((x - 0.6) / 0.2, 2)) + 0.1; };
    const auto f = density_from(n, [&](double a, double b) { return f1(a) * f2(b); });
    const auto g = density_from(n, [&](double a, double b) { return g1(a) * g2(b); });
    const double w = w2_squared_2d(f, g, ma_solve(f, g));

    const TimeAxis axis(n, 1.0 / static_cast<double>(n - 1));
    auto line = [&](const std::function<double(double)>& fn) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = fn(axis.time(i));
        double m = 0.0;
        for (double x : v) m += x * axis.dt();
        for (auto& x : v) x /= m;
        return normalize::Density1D{axis, v};
    };
    const double oracle = ot1d::w2_squared_1d(line(f1), line(g1)).value + ot1d::w2_squared_1d(line(f2), line(g2)).value;
    CHECK(w == doctest::Approx(oracle).epsilon(0.05));
}

TEST_CASE("distance is nearly symmetric") {
    const std::size_t n = 49;
    const auto f = density_from(n, [](double a, double b) { return gaussian(a, b, 0.4, 0.45, 0.12) + 0.05; });
    const auto g = density_from(n, [](double a, double b) { return gaussian(a, b, 0.55, 0.6, 0.1) + 0.05; });
    const double fg = w2_squared_2d(f, g, ma_solve(f, g));
    const double gf = w2_squared_2d(g, f, ma_solve(g, f));
    CHECK(std::abs(fg - gf) / fg <= 5e-2);
}

TEST_CASE("gradient vanishes on balanced perturbations at f = g") {
    const std::size_t n = 33;
    const auto f = density_from(n, [](double a, double b) { return gaussian(a, b, 0.5, 0.4, 0.2) + 0.1; });
    const auto sol = ma_solve(f, f);
    const auto grad = w2_gradient_2d(f, f, sol);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = zero_mean_perturbation(f.grid, seed, false);
        const auto w = trapezoid_weights(f.grid);
        double s = 0.0;
        for (std::size_t k = 0; k < d.size(); ++k) s += grad.values()[k] * d.values()[k];
        CHECK(std::abs(s) <= 1e-3);
        (void)w;
    }
}

TEST_CASE("gradient matches a directional finite difference") {
    const std::size_t n = 33;
    const auto f = density_from(n, [](double a, double b) { return gaussian(a, b, 0.45, 0.5, 0.15) + 0.2; });
    const auto g = density_from(n, [](double a, double b) { return gaussian(a, b, 0.55, 0.45, 0.15) + 0.2; });
    const auto sol = ma_solve(f, g, MaParams{.newton_tol = 1e-12});
    const auto grad = w2_gradient_2d(f, g, sol);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto d = zero_mean_perturbation(f.grid, seed, true);
        const double eps = 1e-5;
        auto shifted = [&](double sign) {
            Density2D p = f;
            for (std::size_t k = 0; k < d.size(); ++k) p.p.values()[k] += sign * eps * d.values()[k];
            return w2_squared_2d(p, g, ma_solve(p, g, MaParams{.newton_tol = 1e-12}));
        };
        const double fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * eps);
        const double an = weighted_dot(grad, d);
        CAPTURE(seed);
        CHECK(std::abs(fd - an) <= 2e-2 * std::abs(an));
    }
}

TEST_CASE("residual never produces NaN for bounded potentials") {
    const std::size_t n = 17;
    const auto f = density_from(n, [](double a, double b) { return 1.0 + a * b; });
    const auto g = density_from(n, [](double a, double b) { return 2.0 - a; });
    SplitMix64 rng(17);
    int thrown = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const double amp = rng.uniform(0.0, 0.01) * (trial % 2 ? 1.0 : 100.0);
        auto u = field_from(n, half_square);
        for (auto& v : u.values()) v += amp * rng.uniform(-1.0, 1.0);
        try {
            const auto r = ma_residual(u, f, g, MaParams{});
            CHECK(r.all_finite());
        } catch (const DomainError&) {
            ++thrown;
        }
    }
    MESSAGE(thrown << " potentials left the target square");
}

TEST_CASE("non-convergence reports the residual history") {
    const std::size_t n = 33;
    const auto f = blob(n, 0.3, 0.3), g = blob(n, 0.7, 0.7);
    try {
        ma_solve(f, g, MaParams{.max_newton = 1, .continuation = false});
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        // the initial residual, plus the one iterate if it stayed inside the target square
        REQUIRE(!e.history().empty());
        CHECK(e.history().size() <= 2);
        CHECK(e.history().front() > 1.0);
    }
    CHECK_THROWS_AS(ma_solve(f, g, MaParams{.max_newton = 1}), ConvergenceError);
}

TEST_CASE("dataset densities") {
    const TimeAxis t(200, 0.004);
    const ShotRecord zero = ShotRecord::zeros(t, 12);
    const auto p = normalize::resolve(normalize::Normalization{}, zero.samples().values(), zero.samples().values());
    const auto d = dataset_to_density(zero, p, {33, 0.0});
    for (double v : d.density.p.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    SplitMix64 rng(4);
    Array2D a(40, 60);
    for (auto& v : a.values()) v = rng.uniform(0.0, 1.0);
    double before = 0.0, after = 0.0;
    for (double v : a.values()) before += v;
    const auto s = gaussian_smooth(a, 2.5);
    for (double v : s.values()) after += v;
    CHECK(std::abs(before - after) <= 1e-12 * before);

    auto lipschitz = [](const Array2D& x) {
        double m = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) {
                if (c + 1 < x.cols()) m = std::max(m, std::abs(x(r, c + 1) - x(r, c)));
                if (r + 1 < x.rows()) m = std::max(m, std::abs(x(r + 1, c) - x(r, c)));
            }
        return m;
    };
    double prev = lipschitz(a);
    for (double sigma : {1.0, 2.0, 4.0}) {
        const double l = lipschitz(gaussian_smooth(a, sigma));
        CHECK(l <= prev);
        prev = l;
    }
    CHECK(gaussian_smooth(a, 0.0) == a);
    CHECK_THROWS_AS(gaussian_smooth(a, -1.0), ParameterError);
}

TEST_CASE("pulling density gradients back to the data matches finite differences") {
    const TimeAxis t(80, 0.005);
    SplitMix64 rng(8);
    Array2D raw(6, 80);
    for (auto& v : raw.values()) v = rng.uniform(-1.0, 1.0);
    const normalize::ScaleParams p{normalize::Kind::exponential, 0.8, 1e-6};
    const DensityOptions opt{17, 1.5};
    Array2D a(17, 17);
    for (auto& v : a.values()) v = rng.uniform(-1.0, 1.0);
    auto J = [&](const Array2D& x) { return weighted_dot(dataset_to_density(ShotRecord(t, x), p, opt).density.p, a); };
    const auto d = dataset_to_density(ShotRecord(t, raw), p, opt);
    const auto back = pullback_to_data(d, a, opt);
    for (auto [r, k] : {std::pair{0u, 0u}, {2u, 40u}, {5u, 79u}, {3u, 11u}}) {
        const double h = 1e-6;
        auto up = raw, dn = raw;
        up(r, k) += h;
        dn(r, k) -= h;
        const double fd = (J(up) - J(dn)) / (2.0 * h);
        CHECK(std::abs(fd - back(r, k)) <= 1e-6 * std::abs(back(r, k)) + 1e-10);
    }
}
