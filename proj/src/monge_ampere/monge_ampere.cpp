#include "fwi/monge_ampere.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "fwi/errors.hpp"

namespace fwi::ma {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

std::size_t side(const Grid2D& g) { return g.nx(); }

void check_density(const Density2D& d, const char* what) {
    if (d.grid.nx() != d.grid.nz() || d.grid.nx() < 5) throw ValidationError(std::string(what) + ": grid must be square with n >= 5");
    if (d.p.rows() != d.grid.nz() || d.p.cols() != d.grid.nx()) throw ValidationError(std::string(what) + ": shape mismatch");
    for (double v : d.p.values())
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(what) + ": density must be positive and finite");
}

void check_pair(const Density2D& f, const Density2D& g) {
    check_density(f, "ma: f");
    check_density(g, "ma: g");
    if (!(f.grid == g.grid)) throw ValidationError("ma: f and g must share a grid");
}

// Bilinear interpolation of g at y (clamped to the square) and its gradient in y.
struct Sample {
    double value;
    double d1;
    double d2;
};

Sample interpolate(const Density2D& g, double y1, double y2) {
    const std::size_t n = side(g.grid);
    const double h = g.grid.dx();
    const bool c1 = y1 < 0.0 || y1 > 1.0, c2 = y2 < 0.0 || y2 > 1.0;
    y1 = std::clamp(y1, 0.0, 1.0);
    y2 = std::clamp(y2, 0.0, 1.0);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(y1 / h), n - 2);
    const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(y2 / h), n - 2);
    const double a = y1 / h - static_cast<double>(i), b = y2 / h - static_cast<double>(j);
    const double g00 = g.p(j, i), g10 = g.p(j, i + 1), g01 = g.p(j + 1, i), g11 = g.p(j + 1, i + 1);
    Sample s;
    s.value = (1 - a) * (1 - b) * g00 + a * (1 - b) * g10 + (1 - a) * b * g01 + a * b * g11;
    s.d1 = c1 ? 0.0 : ((1 - b) * (g10 - g00) + b * (g11 - g01)) / h;
    s.d2 = c2 ? 0.0 : ((1 - a) * (g01 - g00) + a * (g11 - g10)) / h;
    return s;
}

double filter(double x) {
    const double ax = std::abs(x);
    if (ax <= 1.0) return x;
    if (ax >= 2.0) return 0.0;
    return x > 0.0 ? 2.0 - x : -2.0 - x;
}

double filter_slope(double x) {
    const double ax = std::abs(x);
    if (ax <= 1.0) return 1.0;
    if (ax >= 2.0) return 0.0;
    return -1.0;
}

// Linear form sum c_k u_k over a small stencil.
struct Form {
    std::array<std::size_t, 10> idx{};
    std::array<double, 10> coef{};
    std::size_t n = 0;

    void add(std::size_t k, double c) {
        for (std::size_t m = 0; m < n; ++m)
            if (idx[m] == k) {
                coef[m] += c;
                return;
            }
        idx[n] = k;
        coef[n++] = c;
    }
    double apply(const double* u) const {
        double s = 0.0;
        for (std::size_t m = 0; m < n; ++m) s += coef[m] * u[idx[m]];
        return s;
    }
    void accumulate(const Form& o, double a) {
        for (std::size_t m = 0; m < o.n; ++m) add(o.idx[m], a * o.coef[m]);
    }
};

struct NodeResult {
    double value = 0.0;
    Form jac;      // d value / d u
    double df = 0.0;  // d value / d f at this node
};

class Scheme {
public:
    Scheme(const Density2D& f, const Density2D& g, const ResolvedParams& p)
        : f_(f), g_(g), p_(p), n_(side(f.grid)), h_(f.grid.dx()) {
        pinned_ = (n_ / 2) * n_ + n_ / 2;
        const double xc = h_ * static_cast<double>(n_ / 2);
        pin_offset_ = xc * xc;  // |x_c|^2 / 2 with both coordinates equal
    }

    std::size_t pinned() const { return pinned_; }
    std::size_t size() const { return n_ * n_; }

    NodeResult eval(const double* u, std::size_t i, std::size_t j, bool jac) const {
        if (i == 0 || j == 0 || i == n_ - 1 || j == n_ - 1) return boundary(u, i, j);
        return interior(u, i, j, jac);
    }

private:
    std::size_t at(std::size_t i, std::size_t j) const { return j * n_ + i; }

    NodeResult boundary(const double* u, std::size_t i, std::size_t j) const {
        NodeResult r;
        auto one_sided = [&](bool along_x1, bool at_low) {
            Form d;
            const double s = 1.0 / (2.0 * h_);
            for (int m = 0; m < 3; ++m) {
                const double c = (m == 0 ? -3.0 : m == 1 ? 4.0 : -1.0) * s * (at_low ? 1.0 : -1.0);
                const std::size_t ii = along_x1 ? (at_low ? i + m : i - m) : i;
                const std::size_t jj = along_x1 ? j : (at_low ? j + m : j - m);
                d.add(at(ii, jj), c);
            }
            return d;
        };
        if (i == 0 || i == n_ - 1) {
            const bool low = i == 0;
            const Form d = one_sided(true, low);
            // nu = -e1 at x1 = 0, +e1 at x1 = 1
            const double nu = low ? -1.0 : 1.0;
            r.value += nu * (d.apply(u) - h_ * static_cast<double>(i));
            r.jac.accumulate(d, nu);
        }
        if (j == 0 || j == n_ - 1) {
            const bool low = j == 0;
            const Form d = one_sided(false, low);
            const double nu = low ? -1.0 : 1.0;
            r.value += nu * (d.apply(u) - h_ * static_cast<double>(j));
            r.jac.accumulate(d, nu);
        }
        return r;
    }

    // T(a,b) = max(a,d) max(b,d) + min(a,d) + min(b,d) and its partials
    struct Branch {
        double value;
        double da;
        double db;
    };
    Branch variational(double a, double b) const {
        const double d = p_.delta;
        Branch br;
        br.value = variational_determinant(a, b, d);
        br.da = a > d ? std::max(b, d) : 1.0;
        br.db = b > d ? std::max(a, d) : 1.0;
        return br;
    }

    NodeResult interior(const double* u, std::size_t i, std::size_t j, bool want_jac) const {
        const std::size_t c = at(i, j), e = at(i + 1, j), w = at(i - 1, j), nn = at(i, j + 1), s = at(i, j - 1);
        const std::size_t ne = at(i + 1, j + 1), sw = at(i - 1, j - 1), se = at(i + 1, j - 1), nw = at(i - 1, j + 1);
        const double h2 = h_ * h_;

        Form a1, b1, a2, b2, g11, g12, g21, g22, cross;
        a1.add(e, 1 / h2), a1.add(w, 1 / h2), a1.add(c, -2 / h2);
        b1.add(nn, 1 / h2), b1.add(s, 1 / h2), b1.add(c, -2 / h2);
        a2.add(ne, 0.5 / h2), a2.add(sw, 0.5 / h2), a2.add(c, -1 / h2);
        b2.add(se, 0.5 / h2), b2.add(nw, 0.5 / h2), b2.add(c, -1 / h2);
        g11.add(e, 0.5 / h_), g11.add(w, -0.5 / h_);
        g12.add(nn, 0.5 / h_), g12.add(s, -0.5 / h_);
        const double q = 0.25 / h_;
        g21.add(ne, q), g21.add(se, q), g21.add(sw, -q), g21.add(nw, -q);
        g22.add(ne, q), g22.add(nw, q), g22.add(sw, -q), g22.add(se, -q);
        cross.add(ne, 0.25 / h2), cross.add(sw, 0.25 / h2), cross.add(se, -0.25 / h2), cross.add(nw, -0.25 / h2);

        const double fv = f_.p(j, i);
        const double u0 = u[pinned_] - pin_offset_;

        struct Side {
            double value;  // MA_b
            double rhs_g;  // g at the branch's gradient
            Form jac;
        };
        auto branch = [&](const Form& a, const Form& b, const Form& y1, const Form& y2) {
            const double av = a.apply(u), bv = b.apply(u), y1v = y1.apply(u), y2v = y2.apply(u);
            check_target(y1v, y2v);
            const auto t = variational(av, bv);
            const auto gs = interpolate(g_, y1v, y2v);
            Side sd{t.value - fv / gs.value - u0, gs.value, {}};
            if (want_jac) {
                const double k = fv / (gs.value * gs.value);
                sd.jac.accumulate(a, t.da);
                sd.jac.accumulate(b, t.db);
                sd.jac.accumulate(y1, k * gs.d1);
                sd.jac.accumulate(y2, k * gs.d2);
                sd.jac.add(pinned_, -1.0);
            }
            return sd;
        };
        const Side s1 = branch(a1, b1, g11, g12);
        const Side s2 = branch(a2, b2, g21, g22);
        const Side& m = s1.value <= s2.value ? s1 : s2;
        const double mm = -m.value;

        NodeResult r;
        if (p_.monotone_only) {
            r.value = mm;
            r.df = 1.0 / m.rhs_g;
            if (want_jac) r.jac.accumulate(m.jac, -1.0);
            return r;
        }

        const double a1v = a1.apply(u), b1v = b1.apply(u), xv = cross.apply(u);
        const auto gn = interpolate(g_, g11.apply(u), g12.apply(u));
        const double mn = -(a1v * b1v - xv * xv) + fv / gn.value + u0;

        const double eps = p_.epsilon;
        const double x = (mn - mm) / eps;
        r.value = filtered_operator(mm, mn, eps);
        const double sl = filter_slope(x);
        r.df = (1.0 - sl) / m.rhs_g + sl / gn.value;
        if (want_jac) {
            Form jn;
            jn.accumulate(a1, -b1v);
            jn.accumulate(b1, -a1v);
            jn.accumulate(cross, 2.0 * xv);
            const double k = fv / (gn.value * gn.value);
            jn.accumulate(g11, -k * gn.d1);
            jn.accumulate(g12, -k * gn.d2);
            jn.add(pinned_, 1.0);
            // M_F' = (1 - S') M_M' + S' M_N', with M_M' = -MA_b'
            r.jac.accumulate(m.jac, -(1.0 - sl));
            r.jac.accumulate(jn, sl);
        }
        return r;
    }

    void check_target(double y1, double y2) const {
        const double lim = 10.0 * h_;
        if (y1 < -lim || y1 > 1.0 + lim || y2 < -lim || y2 > 1.0 + lim || !std::isfinite(y1) || !std::isfinite(y2))
            throw DomainError("ma: transport map left the target square");
    }

    const Density2D& f_;
    const Density2D& g_;
    ResolvedParams p_;
    std::size_t n_;
    double h_;
    std::size_t pinned_;
    double pin_offset_;
};

Vec residual_vector(const Scheme& s, const Vec& u, std::size_t n) {
    Vec r(static_cast<Eigen::Index>(n * n));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) r[static_cast<Eigen::Index>(j * n + i)] = s.eval(u.data(), i, j, false).value;
    return r;
}

SpMat jacobian(const Scheme& s, const Vec& u, std::size_t n, Vec* df = nullptr) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(n * n * 11);
    if (df) df->setZero(static_cast<Eigen::Index>(n * n));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t row = j * n + i;
            const auto r = s.eval(u.data(), i, j, true);
            for (std::size_t m = 0; m < r.jac.n; ++m)
                trips.emplace_back(static_cast<int>(row), static_cast<int>(r.jac.idx[m]), r.jac.coef[m]);
            if (df) (*df)[static_cast<Eigen::Index>(row)] = r.df;
        }
    SpMat J(static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(n * n));
    J.setFromTriplets(trips.begin(), trips.end());
    J.makeCompressed();
    return J;
}

double max_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Vec to_vec(const Array2D& a) { return Eigen::Map<const Vec>(a.data(), static_cast<Eigen::Index>(a.size())); }

Array2D to_array(const Vec& v, std::size_t n) {
    return Array2D(n, n, std::vector<double>(v.data(), v.data() + v.size()));
}

// Derivative operator along one axis, as used by the cost.
SpMat derivative_matrix(std::size_t n, double h, bool along_x1) {
    std::vector<Eigen::Triplet<double>> t;
    auto id = [&](std::size_t i, std::size_t j) { return static_cast<int>(j * n + i); };
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const int row = id(i, j);
            const std::size_t k = along_x1 ? i : j;
            auto node = [&](std::size_t kk) { return along_x1 ? id(kk, j) : id(i, kk); };
            if (k == 0) {
                t.emplace_back(row, node(0), -1.5 / h);
                t.emplace_back(row, node(1), 2.0 / h);
                t.emplace_back(row, node(2), -0.5 / h);
            } else if (k == n - 1) {
                t.emplace_back(row, node(n - 1), 1.5 / h);
                t.emplace_back(row, node(n - 2), -2.0 / h);
                t.emplace_back(row, node(n - 3), 0.5 / h);
            } else {
                t.emplace_back(row, node(k + 1), 0.5 / h);
                t.emplace_back(row, node(k - 1), -0.5 / h);
            }
        }
    SpMat D(static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(n * n));
    D.setFromTriplets(t.begin(), t.end());
    return D;
}

}  // namespace

double variational_determinant(double a, double b, double delta) {
    return std::max(a, delta) * std::max(b, delta) + std::min(a, delta) + std::min(b, delta);
}

double filtered_operator(double monotone, double accurate, double epsilon) {
    return monotone + epsilon * filter((accurate - monotone) / epsilon);
}

Grid2D unit_grid(std::size_t n) {
    if (n < 2) throw ValidationError("unit_grid: need at least two nodes");
    const double h = 1.0 / static_cast<double>(n - 1);
    return Grid2D(n, n, h, h);
}

Array2D trapezoid_weights(const Grid2D& grid) {
    Array2D w(grid.nz(), grid.nx());
    for (std::size_t j = 0; j < grid.nz(); ++j)
        for (std::size_t i = 0; i < grid.nx(); ++i) {
            const double a = (i == 0 || i == grid.nx() - 1) ? 0.5 : 1.0;
            const double b = (j == 0 || j == grid.nz() - 1) ? 0.5 : 1.0;
            w(j, i) = a * b * grid.dx() * grid.dz();
        }
    return w;
}

Density2D make_density(const Grid2D& grid, Array2D values) {
    if (values.rows() != grid.nz() || values.cols() != grid.nx()) throw ValidationError("make_density: shape mismatch");
    const auto w = trapezoid_weights(grid);
    double mass = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (!(values.values()[k] > 0.0) || !std::isfinite(values.values()[k]))
            throw ValidationError("make_density: values must be positive and finite");
        mass += values.values()[k] * w.values()[k];
    }
    for (auto& v : values.values()) v /= mass;
    return Density2D{grid, std::move(values)};
}

void MaParams::validate() const {
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw ParameterError("ma: delta must be >= 0");
    if (!(epsilon_filter >= 0.0) || !std::isfinite(epsilon_filter)) throw ParameterError("ma: epsilon_filter must be >= 0");
    if (!(newton_tol > 0.0)) throw ParameterError("ma: newton_tol must be positive");
    if (max_newton == 0) throw ParameterError("ma: max_newton must be positive");
    if (!(damping > 0.0 && damping < 1.0)) throw ParameterError("ma: damping must lie in (0, 1)");
    if (!(min_step > 0.0 && min_step <= 1.0)) throw ParameterError("ma: min_step must lie in (0, 1]");
}

ResolvedParams resolve(const MaParams& params, const Density2D& f, const Density2D& g) {
    params.validate();
    check_pair(f, g);
    const std::size_t n = side(g.grid);
    const double h = g.grid.dx();
    double fmax = 0.0, gmin = INFINITY, slope = 0.0;
    for (double v : f.p.values()) fmax = std::max(fmax, v);
    for (double v : g.p.values()) gmin = std::min(gmin, v);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            if (i + 1 < n) slope = std::max(slope, std::abs(g.p(j, i + 1) - g.p(j, i)) / h);
            if (j + 1 < n) slope = std::max(slope, std::abs(g.p(j + 1, i) - g.p(j, i)) / h);
        }
    ResolvedParams r;
    r.lipschitz = fmax * slope / (gmin * gmin);
    r.epsilon = params.epsilon_filter > 0.0 ? params.epsilon_filter : std::sqrt(h);
    r.delta = params.delta > 0.0 ? params.delta : std::clamp(1.01 * r.lipschitz * h / 2.0, 1e-6, r.epsilon / 4.0);
    return r;
}

Array2D ma_residual(const Array2D& u, const Density2D& f, const Density2D& g, const ResolvedParams& params) {
    check_pair(f, g);
    const std::size_t n = side(f.grid);
    if (u.rows() != n || u.cols() != n) throw ValidationError("ma_residual: u must match the density grid");
    const Scheme s(f, g, params);
    return to_array(residual_vector(s, to_vec(u), n), n);
}

Array2D ma_residual(const Array2D& u, const Density2D& f, const Density2D& g, const MaParams& params) {
    return ma_residual(u, f, g, resolve(params, f, g));
}

namespace {

struct NewtonOutcome {
    bool converged;
    std::size_t iters;
    double norm;
};

// Damped Newton on the scheme from u (updated in place). Residual max-norms are appended to history.
NewtonOutcome newton(const Scheme& s, Vec& u, std::size_t n, const MaParams& params, std::vector<double>& history) {
    Vec r;
    try {
        r = residual_vector(s, u, n);
    } catch (const DomainError&) {
        return {false, 0, INFINITY};
    }
    double norm = max_norm(r);
    history.push_back(norm);
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    std::size_t it = 0;
    while (norm > params.newton_tol && it < params.max_newton) {
        lu.compute(jacobian(s, u, n));
        if (lu.info() != Eigen::Success) throw NumericalError("ma_solve: Jacobian factorization failed");
        const Vec du = lu.solve(-r);
        if (lu.info() != Eigen::Success || !du.allFinite()) throw NumericalError("ma_solve: Jacobian solve failed");

        double t = 1.0;
        Vec trial, trial_r;
        double trial_norm = INFINITY;
        while (true) {
            trial = u + t * du;
            bool ok = true;
            try {
                trial_r = residual_vector(s, trial, n);
                trial_norm = max_norm(trial_r);
            } catch (const DomainError&) {
                ok = false;
            }
            if (ok && trial_norm < norm) break;
            if (t * params.damping < params.min_step) {
                if (!ok) return {false, it, norm};
                break;  // accept the shortest step
            }
            t *= params.damping;
        }
        u = trial;
        r = trial_r;
        norm = trial_norm;
        ++it;
        history.push_back(norm);
    }
    return {norm <= params.newton_tol, it, norm};
}

Density2D blend(const Density2D& f, const Density2D& g, double s) {
    Density2D b{f.grid, Array2D(f.p.rows(), f.p.cols())};
    for (std::size_t k = 0; k < b.p.size(); ++k) b.p.values()[k] = (1.0 - s) * f.p.values()[k] + s * g.p.values()[k];
    return b;
}

}  // namespace

namespace {

// Newton with continuation in the target density g_s = (1 - s) f + s g when the direct solve fails.
NewtonOutcome solve_with_continuation(const Density2D& f, const Density2D& g, const ResolvedParams& rp,
                                      const MaParams& params, Vec& u, std::size_t n,
                                      std::vector<double>& history) {
    Vec direct = u;
    auto out = newton(Scheme(f, g, rp), direct, n, params, history);
    if (out.converged || !params.continuation) {
        if (out.converged) u = direct;
        return out;
    }
    MaParams stage_params = params;
    stage_params.max_newton = std::min<std::size_t>(params.max_newton, 12);
    Vec base = u;
    double at = 0.0, step = 0.25;
    std::size_t iters = out.iters;
    while (at < 1.0 && step >= 1.0 / 256.0) {
        const double next = std::min(1.0, at + step);
        const Density2D gs = next == 1.0 ? g : blend(f, g, next);
        Vec trial = base;
        const auto o = newton(Scheme(f, gs, rp), trial, n, next == 1.0 ? params : stage_params, history);
        iters += o.iters;
        if (o.converged) {
            base = trial;
            at = next;
            step = std::min(2.0 * step, 0.5);
            out = o;
        } else {
            step *= 0.5;
        }
    }
    out.iters = iters;
    if (at == 1.0)
        u = base;
    else
        out.converged = false;
    return out;
}

}  // namespace

MaSolution ma_solve(const Density2D& f, const Density2D& g, const MaParams& params) {
    const auto rp = resolve(params, f, g);
    const std::size_t n = side(f.grid);
    const double h = f.grid.dx();

    Vec u(static_cast<Eigen::Index>(n * n));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const double x1 = h * static_cast<double>(i), x2 = h * static_cast<double>(j);
            u[static_cast<Eigen::Index>(j * n + i)] = 0.5 * (x1 * x1 + x2 * x2);
        }

    MaSolution sol;
    sol.pinned_index = Scheme(f, g, rp).pinned();
    sol.params = rp;
    MaParams first = params;
    if (params.continuation) first.max_newton = std::min<std::size_t>(params.max_newton, 20);
    Vec direct = u;
    auto out = newton(Scheme(f, g, rp), direct, n, first, sol.history);
    std::size_t iters = out.iters;
    if (out.converged) {
        u = direct;
    } else if (params.continuation) {
        // The monotone scheme alone is far more robust. Its solution warm-starts the filtered scheme;
        // if that still fails the monotone solution is returned and marked as such.
        ResolvedParams mono = rp;
        mono.monotone_only = true;
        out = solve_with_continuation(f, g, mono, params, u, n, sol.history);
        iters += out.iters;
        if (out.converged) {
            Vec warm = u;
            const auto o = newton(Scheme(f, g, rp), warm, n, first, sol.history);
            iters += o.iters;
            if (o.converged) {
                u = warm;
                out = o;
            } else {
                sol.params = mono;
            }
        }
    }
    sol.newton_iters = iters;
    sol.residual_norm = out.norm;
    sol.u = to_array(u, n);
    if (!out.converged)
        throw ConvergenceError("ma_solve: no convergence after " + std::to_string(iters) +
                                   " Newton iterations (residual " + std::to_string(out.norm) + ")",
                               sol.history);
    return sol;
}

std::pair<Array2D, Array2D> map_of(const Array2D& u, const Grid2D& grid) {
    const std::size_t n = side(grid);
    if (u.rows() != n || u.cols() != n) throw ValidationError("map_of: u must match the grid");
    const Vec uv = to_vec(u);
    const Vec d1 = derivative_matrix(n, grid.dx(), true) * uv;
    const Vec d2 = derivative_matrix(n, grid.dx(), false) * uv;
    return {to_array(d1, n), to_array(d2, n)};
}

double w2_squared_2d(const Density2D& f, const Density2D& g, const MaSolution& sol) {
    check_pair(f, g);
    const std::size_t n = side(f.grid);
    const auto [d1, d2] = map_of(sol.u, f.grid);
    const auto w = trapezoid_weights(f.grid);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const double r1 = f.grid.x(i) - d1(j, i), r2 = f.grid.z(j) - d2(j, i);
            s += f.p(j, i) * (r1 * r1 + r2 * r2) * w(j, i);
        }
    return s;
}

Array2D w2_gradient_2d(const Density2D& f, const Density2D& g, const MaSolution& sol) {
    check_pair(f, g);
    const std::size_t n = side(f.grid);
    const double h = f.grid.dx();
    const Scheme s(f, g, sol.params);
    const Vec u = to_vec(sol.u);
    Vec df;
    const SpMat J = jacobian(s, u, n, &df);

    const SpMat D1 = derivative_matrix(n, h, true), D2 = derivative_matrix(n, h, false);
    const Vec w = to_vec(trapezoid_weights(f.grid));
    const Vec fw = to_vec(f.p).cwiseProduct(w);
    Vec x1(static_cast<Eigen::Index>(n * n)), x2(static_cast<Eigen::Index>(n * n));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            x1[static_cast<Eigen::Index>(j * n + i)] = f.grid.x(i);
            x2[static_cast<Eigen::Index>(j * n + i)] = f.grid.z(j);
        }
    const Vec r1 = x1 - D1 * u, r2 = x2 - D2 * u;
    const Vec b = D1.transpose() * fw.cwiseProduct(r1) + D2.transpose() * fw.cwiseProduct(r2);

    const SpMat Jt = J.transpose();
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu(Jt);
    if (lu.info() != Eigen::Success) throw NumericalError("w2_gradient_2d: Jacobian factorization failed");
    const Vec lambda = lu.solve(b);
    if (lu.info() != Eigen::Success || !lambda.allFinite()) throw NumericalError("w2_gradient_2d: transpose solve failed");

    const Vec grad = w.cwiseProduct(r1.cwiseProduct(r1) + r2.cwiseProduct(r2)) + 2.0 * df.cwiseProduct(lambda);
    return to_array(grad, n);
}

Array2D gaussian_smooth(const Array2D& a, double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParameterError("gaussian_smooth: sigma must be >= 0");
    if (sigma == 0.0 || a.empty()) return a;
    const int half = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
    double sum = 0.0;
    for (int m = -half; m <= half; ++m) {
        const double v = std::exp(-0.5 * (m / sigma) * (m / sigma));
        k[static_cast<std::size_t>(m + half)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    auto reflect = [](long p, long n) {
        const long period = 2 * n;
        long q = ((p % period) + period) % period;
        return q >= n ? period - 1 - q : q;
    };
    const long rows = static_cast<long>(a.rows()), cols = static_cast<long>(a.cols());
    Array2D tmp(a.rows(), a.cols()), out(a.rows(), a.cols());
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int m = -half; m <= half; ++m) s += k[static_cast<std::size_t>(m + half)] * a(r, reflect(c + m, cols));
            tmp(r, c) = s;
        }
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int m = -half; m <= half; ++m) s += k[static_cast<std::size_t>(m + half)] * tmp(reflect(r + m, rows), c);
            out(r, c) = s;
        }
    return out;
}

namespace {

// Bilinear resampling from a rows x cols array on [0,1]^2 (rows along x2) to n x n nodes, as a list of taps.
struct Tap {
    std::size_t src;
    double w;
};

std::vector<std::array<Tap, 4>> resample_taps(std::size_t rows, std::size_t cols, std::size_t n) {
    std::vector<std::array<Tap, 4>> taps(n * n);
    const double h = 1.0 / static_cast<double>(n - 1);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const double pc = h * static_cast<double>(i) * static_cast<double>(cols - 1);
            const double pr = h * static_cast<double>(j) * static_cast<double>(rows - 1);
            const std::size_t c0 = std::min(static_cast<std::size_t>(pc), cols - 2);
            const std::size_t r0 = std::min(static_cast<std::size_t>(pr), rows - 2);
            const double a = std::clamp(pc - static_cast<double>(c0), 0.0, 1.0);
            const double b = std::clamp(pr - static_cast<double>(r0), 0.0, 1.0);
            taps[j * n + i] = {Tap{r0 * cols + c0, (1 - a) * (1 - b)}, Tap{r0 * cols + c0 + 1, a * (1 - b)},
                               Tap{(r0 + 1) * cols + c0, (1 - a) * b}, Tap{(r0 + 1) * cols + c0 + 1, a * b}};
        }
    return taps;
}

}  // namespace

DataDensity dataset_to_density(const ShotRecord& shot, const normalize::ScaleParams& params,
                               const DensityOptions& options) {
    const std::size_t R = shot.receivers(), nt = shot.nt();
    if (R < 2 || nt < 2) throw ValidationError("dataset_to_density: need at least two receivers and two samples");
    if (options.n < 5) throw ParameterError("dataset_to_density: density grid needs n >= 5");
    const auto scaled = normalize::scale(shot.samples().values(), params);
    // data layout: x1 = receiver, x2 = time, so the array is transposed to nt x R
    Array2D s(nt, R);
    std::vector<double> jac(R * nt);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t k = 0; k < nt; ++k) {
            s(k, r) = scaled.values[r * nt + k];
            jac[k * R + r] = scaled.jac[r * nt + k];
        }
    const Array2D sm = gaussian_smooth(s, options.smooth_sigma);
    const auto taps = resample_taps(nt, R, options.n);
    const Grid2D grid = unit_grid(options.n);
    Array2D v(options.n, options.n);
    for (std::size_t q = 0; q < taps.size(); ++q) {
        double x = 0.0;
        for (const auto& t : taps[q]) x += t.w * sm.values()[t.src];
        v.values()[q] = x;
    }
    const auto w = trapezoid_weights(grid);
    double mass = 0.0;
    for (std::size_t q = 0; q < v.size(); ++q) mass += v.values()[q] * w.values()[q];
    DataDensity out{make_density(grid, v), std::move(jac), mass, R, nt};
    return out;
}

Array2D pullback_to_data(const DataDensity& d, const Array2D& grad, const DensityOptions& options) {
    const std::size_t n = side(d.density.grid);
    if (grad.rows() != n || grad.cols() != n) throw ValidationError("pullback_to_data: gradient shape mismatch");
    const auto w = trapezoid_weights(d.density.grid);
    double proj = 0.0;
    for (std::size_t q = 0; q < grad.size(); ++q) proj += grad.values()[q] * d.density.p.values()[q];
    Array2D back(d.nt, d.receivers);
    const auto taps = resample_taps(d.nt, d.receivers, n);
    for (std::size_t q = 0; q < taps.size(); ++q) {
        const double b = (grad.values()[q] - w.values()[q] * proj) / d.mass;
        for (const auto& t : taps[q]) back.values()[t.src] += t.w * b;
    }
    const Array2D sm = gaussian_smooth(back, options.smooth_sigma);
    Array2D out(d.receivers, d.nt);
    for (std::size_t r = 0; r < d.receivers; ++r)
        for (std::size_t k = 0; k < d.nt; ++k) out(r, k) = sm(k, r) * d.jac[k * d.receivers + r];
    return out;
}

}  // namespace fwi::ma
