#include "fwi/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "fwi/errors.hpp"
#include "fwi/monge_ampere.hpp"
#include "fwi/ot1d.hpp"
#include "fwi/rng.hpp"

namespace fwi::exp {

VelocityModel lens_model(const Grid2D& grid, const LensSpec& lens, VelocityBounds bounds) {
    Array2D c(grid.nz(), grid.nx());
    for (std::size_t iz = 0; iz < grid.nz(); ++iz)
        for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
            const double dx = grid.x(ix) - lens.center_x, dz = grid.z(iz) - lens.center_z;
            const double w = std::exp(-(dx * dx + dz * dz) / (2.0 * lens.sigma * lens.sigma));
            c(iz, ix) = lens.background * (1.0 + lens.anomaly * w);
        }
    return VelocityModel::from_velocity(grid, c, bounds);
}

VelocityModel smoothed_model(const VelocityModel& model, double sigma_cells) {
    return VelocityModel::from_velocity(model.grid(), ma::gaussian_smooth(model.velocity(), sigma_cells),
                                        model.bounds());
}

std::vector<Point2> line_of_points(std::size_t count, double x0, double x1, double z) {
    std::vector<Point2> pts;
    for (std::size_t i = 0; i < count; ++i) {
        const double w = count == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(count - 1);
        pts.push_back({x0 + w * (x1 - x0), z});
    }
    return pts;
}

std::vector<Point2> three_sided_receivers(std::size_t count, const Grid2D& grid, double inset) {
    const std::size_t bottom = count - 2 * (count / 4), side = count / 4;
    const double xmax = grid.x_max(), zmax = grid.z(grid.nz() - 1);
    auto pts = line_of_points(bottom, grid.x0() + 0.5 * inset, xmax - 0.5 * inset, zmax - inset);
    for (const auto& p : line_of_points(side, grid.z0() + 0.1 * (zmax - grid.z0()), grid.z0() + 0.95 * (zmax - grid.z0()), 0.0)) {
        pts.push_back({grid.x0() + inset, p.x});
        pts.push_back({xmax - inset, p.x});
    }
    return pts;
}

double velocity_rmse(const VelocityModel& a, const VelocityModel& b) {
    const auto ca = a.velocity(), cb = b.velocity();
    if (ca.rows() != cb.rows() || ca.cols() != cb.cols()) throw ValidationError("velocity_rmse: grids differ");
    double s = 0.0;
    for (std::size_t k = 0; k < ca.size(); ++k) s += (ca.values()[k] - cb.values()[k]) * (ca.values()[k] - cb.values()[k]);
    return std::sqrt(s / static_cast<double>(ca.size()));
}

std::vector<ShotRecord> synthesize(const VelocityModel& model, const Acquisition& acq, const TimeAxis& time,
                                   const wave::SimConfig& cfg) {
    std::vector<ShotRecord> out;
    for (std::size_t s = 0; s < acq.sources().size(); ++s) out.push_back(wave::forward(model, acq, time, cfg, s).record);
    return out;
}

InversionOutcome invert(const InversionSetup& setup, const VelocityModel& start, std::span<const ShotRecord> observed,
                        const VelocityModel* truth, const ModelCallback& callback) {
    const Grid2D grid = start.grid();
    const VelocityBounds bounds = start.bounds();
    wave::SimConfig sim = setup.sim;
    if (sim.sponge_velocity == 0.0) sim.sponge_velocity = start.c_max();  // keep J smooth in m

    opt::LbfgsConfig oc = setup.optimizer;
    oc.bounds = opt::Box{1.0 / (bounds.c_max * bounds.c_max), 1.0 / (bounds.c_min * bounds.c_min)};
    if (oc.step_reference == 0.0)
        oc.step_reference = *std::max_element(start.m().values().begin(), start.m().values().end());

    std::atomic<std::size_t> fallbacks{0};
    const auto misfit_fn = misfit::make_function(setup.misfit, &fallbacks);
    const opt::Objective objective = [&](std::span<const double> x, std::span<double> g) {
        const VelocityModel model(grid, Array2D(grid.nz(), grid.nx(), std::vector<double>(x.begin(), x.end())), bounds);
        auto res = adjoint::gradient(model, setup.acquisition, setup.time, sim, observed, misfit_fn, setup.gradient);
        Array2D grad = std::move(res.gradient.values);
        if (setup.gradient_smoothing > 0.0) grad = ma::gaussian_smooth(grad, setup.gradient_smoothing);
        std::copy(grad.values().begin(), grad.values().end(), g.begin());
        return res.value;
    };

    InversionOutcome out{start, {}, {}, 0};
    const auto to_model = [&](std::span<const double> x) {
        return VelocityModel(grid, Array2D(grid.nz(), grid.nx(), std::vector<double>(x.begin(), x.end())), bounds);
    };
    const opt::IterationCallback cb = [&](const opt::IterationRecord& r, std::span<const double> x) {
        const auto model = to_model(x);
        if (truth) out.rmse.push_back(velocity_rmse(model, *truth));
        return !callback || callback(r, model);
    };
    out.run = opt::lbfgs_minimize(objective, start.m().values(), oc, cb);
    out.model = to_model(out.run.x);
    out.fallbacks = fallbacks.load();
    return out;
}

io::Table history_table(const InversionOutcome& out) {
    io::Table t;
    t.header = {"iter", "J", "J_rel", "grad_norm", "step_length", "wall_seconds"};
    if (!out.rmse.empty()) t.header.push_back("rmse");
    for (std::size_t k = 0; k < out.run.history.size(); ++k) {
        const auto& h = out.run.history[k];
        std::vector<double> row{static_cast<double>(h.iter), h.value, h.relative, h.grad_norm, h.step, h.wall_seconds};
        if (!out.rmse.empty()) row.push_back(out.rmse[k]);
        t.rows.push_back(std::move(row));
    }
    return t;
}

ToyProblem toy_lens_problem(misfit::Kind kind, std::size_t iterations) {
    const Grid2D grid(101, 101, 20.0, 20.0);
    const VelocityBounds bounds{1000.0, 3000.0};
    LensSpec lens;
    lens.sigma = 400.0;
    auto truth = lens_model(grid, lens, bounds);
    auto start = VelocityModel::constant_velocity(grid, lens.background, bounds);
    Acquisition acq(line_of_points(8, 100.0, 1900.0, 40.0), three_sided_receivers(64, grid, 40.0),
                    SourceWavelet{WaveletKind::ricker, 6.0, 0.25});
    wave::SimConfig sim;
    sim.sponge_velocity = lens.background;
    const double dt = 0.9 * wave::max_stable_dt(VelocityModel::constant_velocity(grid, bounds.c_max, bounds), sim);
    const TimeAxis time(static_cast<std::size_t>(2.2 / dt), dt);
    InversionSetup setup{std::move(acq), time, sim, misfit::MisfitKind{.kind = kind}, opt::LbfgsConfig{}, {}, 0.0};
    setup.optimizer.max_iters = iterations;
    return {std::move(truth), std::move(start), std::move(setup)};
}

std::vector<double> double_ricker(const TimeAxis& time, const SensitivitySpec& spec, double shift) {
    std::vector<double> f(time.nt());
    const auto ricker = [&](double t, double delay) {
        const double x = std::numbers::pi * spec.frequency * (t - shift - delay);
        return (1.0 - 2.0 * x * x) * std::exp(-x * x);
    };
    for (std::size_t i = 0; i < time.nt(); ++i)
        f[i] = spec.first_amp * ricker(time.time(i), spec.first) + spec.second_amp * ricker(time.time(i), spec.second);
    return f;
}

io::Table sensitivity_sweep(const SensitivitySpec& spec) {
    if (!(spec.shift_step > 0.0) || spec.shift_max < spec.shift_min)
        throw ParameterError("sensitivity: need shift_step > 0 and shift_min <= shift_max");
    const TimeAxis time(static_cast<std::size_t>(std::lround(spec.length / spec.dt)), spec.dt);
    const ShotRecord obs(time, Array2D(1, time.nt(), double_ricker(time, spec, 0.0)));
    const misfit::MisfitKind w2{.kind = misfit::Kind::w2_trace, .normalization = spec.normalization};
    io::Table t;
    t.header = {"shift", "l2", "integral_l2", "w2_trace"};
    const auto steps = static_cast<long>(std::floor((spec.shift_max - spec.shift_min) / spec.shift_step + 1e-9));
    for (long k = 0; k <= steps; ++k) {
        const double s = spec.shift_min + spec.shift_step * static_cast<double>(k);
        const ShotRecord sim(time, Array2D(1, time.nt(), double_ricker(time, spec, s)));
        t.rows.push_back({s, misfit::l2(sim, obs).value, misfit::integral_l2(sim, obs).value,
                          misfit::evaluate(w2, sim, obs).value});
    }
    return t;
}

std::size_t derivative_sign_changes(std::span<const double> values) {
    std::size_t changes = 0;
    int last = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double d = values[i] - values[i - 1];
        const int sign = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
        if (sign == 0) continue;
        if (last != 0 && sign != last) ++changes;
        last = sign;
    }
    return changes;
}

io::Table noise_study(const NoiseSpec& spec) {
    if (spec.max_pieces_log2 < spec.min_pieces_log2 || (std::size_t{1} << spec.max_pieces_log2) > spec.nt)
        throw ParameterError("noise: piece counts must not exceed the number of samples");
    if (spec.realizations == 0) throw ParameterError("noise: need at least one realization");
    const TimeAxis time(spec.nt, spec.dt);
    SensitivitySpec sig;
    sig.frequency = spec.frequency;
    sig.first = 0.4 * time.length();
    sig.second = 0.6 * time.length();
    const auto clean = double_ricker(time, sig, 0.0);
    double peak = 0.0;
    for (double v : clean) peak = std::max(peak, std::abs(v));
    const double amp = spec.amplitude * peak;

    // a fixed positive offset keeps both traces densities; mean-zero noise keeps the masses equal
    const normalize::Normalization norm{normalize::Kind::linear, 2.0 * (peak + amp), 0.0, false};
    io::Table t;
    t.header = {"pieces", "w2", "l2"};
    SplitMix64 rng(spec.seed);
    for (std::size_t lg = spec.min_pieces_log2; lg <= spec.max_pieces_log2; ++lg) {
        const std::size_t pieces = std::size_t{1} << lg;
        double w2 = 0.0, l2 = 0.0;
        for (std::size_t r = 0; r < spec.realizations; ++r) {
            std::vector<double> noisy = clean;
            for (std::size_t p = 0; p < pieces; ++p) {
                const double e = amp * rng.uniform(-1.0, 1.0);
                const std::size_t i0 = p * spec.nt / pieces, i1 = (p + 1) * spec.nt / pieces;
                for (std::size_t i = i0; i < i1; ++i) noisy[i] += e;
            }
            const ShotRecord a(time, Array2D(1, spec.nt, clean)), b(time, Array2D(1, spec.nt, noisy));
            w2 += ot1d::trace_w2_misfit(b, a, norm).value;
            l2 += 2.0 * misfit::l2(b, a).value;
        }
        t.rows.push_back({static_cast<double>(pieces), w2 / static_cast<double>(spec.realizations),
                          l2 / static_cast<double>(spec.realizations)});
    }
    return t;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("loglog_slope: need >= 2 matching points");
    double mx = 0.0, my = 0.0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0)) throw DomainError("loglog_slope: values must be positive");
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

TomoResult tomo_roundtrip(const TomoSpec& spec) {
    if (!(spec.gradient > 0.0) || !(spec.v0 > 0.0)) throw ParameterError("tomo: need v0 > 0 and a positive gradient");
    if (!(spec.max_turning_depth < spec.depth)) throw ParameterError("tomo: turning depth must lie inside the profile");
    if (spec.rays < 2) throw ParameterError("tomo: need at least two rays");
    ray::SlownessProfile prof;
    const auto n = static_cast<std::size_t>(std::lround(spec.depth / spec.dz));
    for (std::size_t i = 0; i <= n; ++i) {
        const double z = spec.dz * static_cast<double>(i);
        prof.z.push_back(z);
        prof.s.push_back(1.0 / (spec.v0 + spec.gradient * z));
    }
    const double s0 = 1.0 / spec.v0, s_min = 1.0 / (spec.v0 + spec.gradient * spec.max_turning_depth);
    TomoResult res;
    res.rays.header = {"p", "T", "X"};
    std::vector<double> p, X;
    for (std::size_t i = 1; i <= spec.rays; ++i) {
        p.push_back(s0 - (s0 - s_min) * static_cast<double>(i) / static_cast<double>(spec.rays));
        const auto r = ray::ray_integrals(prof, p.back());
        X.push_back(r.X);
        res.rays.rows.push_back({p.back(), r.T, r.X});
    }
    const auto inv = ray::herglotz_invert(p, X, s0);
    res.profile.header = {"z", "v", "v_true"};
    for (std::size_t k = 0; k < inv.z.size(); ++k) {
        const double v = 1.0 / inv.s[k], truth = spec.v0 + spec.gradient * inv.z[k];
        res.profile.rows.push_back({inv.z[k], v, truth});
        res.max_relative_error = std::max(res.max_relative_error, std::abs(v - truth) / truth);
    }
    return res;
}

}  // namespace fwi::exp
