#include "fwi/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "fwi/adjoint.hpp"
#include "fwi/born.hpp"
#include "fwi/errors.hpp"
#include "fwi/io.hpp"
#include "fwi/parallel.hpp"

namespace fwi::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string indexed(const std::string& stem, std::size_t k, int width, const std::string& ext) {
    std::string digits = std::to_string(k);
    if (digits.size() < static_cast<std::size_t>(width)) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
    return stem + digits + ext;
}

using Summary = std::vector<std::pair<std::string, std::string>>;

void write_summary(const Summary& s, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& [k, v] : s) out << k << " = " << v << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void say(const Context& ctx, const std::string& line) {
    if (ctx.log) *ctx.log << line << '\n' << std::flush;
}

const fs::path& prepare(const Context& ctx) {
    fs::create_directories(ctx.output_dir);
    return ctx.output_dir;
}

Point2 point_of(const std::vector<double>& g, const cfg::Config& c, const std::string& section, const std::string& key) {
    if (g.size() != 2) throw ConfigError("[" + section + "] " + key + ": each group needs 'x z'", c.line_of(section, key));
    return {g[0], g[1]};
}

std::vector<Point2> points(const cfg::Config& c, const std::string& section, const std::string& key) {
    std::vector<Point2> out;
    for (const auto& g : c.get_groups(section, key)) out.push_back(point_of(g, c, section, key));
    return out;
}

// Turns a module-level rejection into a config error that points at the offending section.
template <class F>
auto checked(const cfg::Config& c, const std::string& section, F&& build) {
    try {
        return build();
    } catch (const ConfigError&) {
        throw;
    } catch (const ValidationError& e) {
        throw ConfigError("[" + section + "] " + e.what(), c.line_of(section, ""));
    } catch (const ParameterError& e) {
        throw ConfigError("[" + section + "] " + e.what(), c.line_of(section, ""));
    }
}

std::string kind_name(normalize::Kind k) {
    switch (k) {
        case normalize::Kind::linear: return "linear";
        case normalize::Kind::exponential: return "exponential";
        case normalize::Kind::sign_sensitive: return "sign_sensitive";
        case normalize::Kind::square: return "square";
    }
    return "?";
}

Array2D transposed(const Array2D& a) {
    Array2D t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t k = 0; k < a.cols(); ++k) t(k, r) = a(r, k);
    return t;
}

std::vector<ShotRecord> read_observed(const fs::path& dir, const Acquisition& acq, const TimeAxis& time) {
    std::vector<ShotRecord> out;
    for (std::size_t s = 0; s < acq.sources().size(); ++s) {
        auto shot = io::read_shot_file(dir / indexed("shot_", s, 3, ".fwigath"));
        if (shot.receivers() != acq.receivers().size() || !(shot.time() == time))
            throw ValidationError("observed shot " + std::to_string(s) + " does not match the configured receivers/time axis");
        out.push_back(std::move(shot));
    }
    return out;
}

}  // namespace

// ---- config readers ----

Grid2D grid_from(const cfg::Config& c) {
    c.require_section("grid");
    const auto nx = c.get_size("grid", "nx", 0), nz = c.get_size("grid", "nz", 0);
    if (nx == 0) throw ConfigError("[grid] nx is required", c.line_of("grid", "nx"));
    if (nz == 0) throw ConfigError("[grid] nz is required", c.line_of("grid", "nz"));
    const double dx = c.require_double("grid", "dx");
    const double dz = c.get_double("grid", "dz", dx);
    const double x0 = c.get_double("grid", "x0", 0.0), z0 = c.get_double("grid", "z0", 0.0);
    return checked(c, "grid", [&] { return Grid2D(nx, nz, dx, dz, x0, z0); });
}

wave::SimConfig sim_from(const cfg::Config& c) {
    wave::SimConfig s;
    s.spatial_order = static_cast<int>(c.get_size("grid", "spatial_order", 4));
    s.sponge_width = c.get_size("grid", "sponge_width", s.sponge_width);
    s.sponge_strength = c.get_double("grid", "sponge_strength", s.sponge_strength);
    s.sponge_velocity = c.get_double("grid", "sponge_velocity", 0.0);
    s.cfl_safety = c.get_double("grid", "cfl_safety", s.cfl_safety);
    s.free_surface = c.get_bool("grid", "free_surface", false);
    checked(c, "grid", [&] { s.validate(); return 0; });
    return s;
}

VelocityBounds bounds_from(const cfg::Config& c) {
    VelocityBounds b;
    b.c_min = c.get_double("model", "c_min", b.c_min);
    b.c_max = c.get_double("model", "c_max", b.c_max);
    if (!(b.c_min > 0.0) || !(b.c_max > b.c_min))
        throw ConfigError("[model] need 0 < c_min < c_max", c.line_of("model", "c_min"));
    return b;
}

VelocityModel model_from(const cfg::Config& c, const Grid2D& grid) {
    c.require_section("model");
    const auto bounds = bounds_from(c);
    const auto file = c.get_string("model", "file", "");
    if (!file.empty()) {
        auto m = io::read_grid_file(file, bounds);
        if (!(m.grid() == grid)) throw ConfigError("[model] file grid does not match [grid]", c.line_of("model", "file"));
        return m;
    }
    exp::LensSpec lens;
    lens.background = c.require_double("model", "background");
    lens.anomaly = c.get_double("model", "lens_anomaly", 0.0);
    lens.center_x = c.get_double("model", "lens_x", 0.5 * (grid.x0() + grid.x_max()));
    lens.center_z = c.get_double("model", "lens_z", 0.5 * (grid.z0() + grid.z_max()));
    lens.sigma = c.get_double("model", "lens_sigma", lens.sigma);
    if (!(lens.sigma > 0.0)) throw ConfigError("[model] lens_sigma must be positive", c.line_of("model", "lens_sigma"));
    return checked(c, "model", [&] { return exp::lens_model(grid, lens, bounds); });
}

VelocityModel initial_from(const cfg::Config& c, const Grid2D& grid, const VelocityModel* truth) {
    const auto kind = c.get_string("initial", "kind", "smoothed");
    const auto bounds = bounds_from(c);
    if (kind == "homogeneous") {
        const double fallback = truth ? c.get_double("model", "background", 0.0) : 0.0;
        const double v = c.get_double("initial", "velocity", fallback);
        if (!(v > 0.0)) throw ConfigError("[initial] homogeneous start needs velocity", c.line_of("initial", "velocity"));
        return checked(c, "initial", [&] { return VelocityModel::constant_velocity(grid, v, bounds); });
    }
    if (kind == "smoothed") {
        const double cells = c.get_double("initial", "smooth_cells", 40.0);
        if (!truth) throw ConfigError("[initial] smoothed start needs a [model] section", c.line_of("initial", "kind"));
        if (!(cells >= 0.0)) throw ConfigError("[initial] smooth_cells must be >= 0", c.line_of("initial", "smooth_cells"));
        return cells == 0.0 ? *truth : exp::smoothed_model(*truth, cells);
    }
    if (kind == "file") {
        auto m = io::read_grid_file(c.require_string("initial", "file"), bounds);
        if (!(m.grid() == grid)) throw ConfigError("[initial] file grid does not match [grid]", c.line_of("initial", "file"));
        return m;
    }
    if (kind == "truth") {
        if (!truth) throw ConfigError("[initial] kind = truth needs a [model] section", c.line_of("initial", "kind"));
        return *truth;
    }
    throw ConfigError("[initial] kind must be homogeneous, smoothed, file or truth", c.line_of("initial", "kind"));
}

TimeAxis time_from(const cfg::Config& c, const Grid2D& grid, const wave::SimConfig& sim, double c_ref) {
    c.require_section("time");
    double dt = c.get_double("time", "dt", 0.0);
    if (dt == 0.0) dt = wave::max_stable_dt(VelocityModel::constant_velocity(grid, c_ref, {0.5 * c_ref, 2.0 * c_ref}), sim);
    if (!(dt > 0.0)) throw ConfigError("[time] dt must be positive", c.line_of("time", "dt"));
    std::size_t nt = c.get_size("time", "nt", 0);
    const double t_max = c.get_double("time", "t_max", 0.0);
    if (nt == 0 && t_max > 0.0) nt = static_cast<std::size_t>(std::floor(t_max / dt)) + 1;
    if (nt < 2) throw ConfigError("[time] needs nt >= 2 or a positive t_max", c.line_of("time", "nt"));
    return checked(c, "time", [&] { return TimeAxis(nt, dt); });
}

SourceWavelet wavelet_from(const cfg::Config& c) {
    SourceWavelet w;
    w.peak_frequency = c.get_double("wavelet", "frequency", w.peak_frequency);
    w.delay = c.get_double("wavelet", "delay", 1.5 / w.peak_frequency);
    w.highpass_cut = c.get_double("wavelet", "highpass", 0.0);
    w.amplitude = c.get_double("wavelet", "amplitude", 1.0);
    checked(c, "wavelet", [&] { w.validate(); return 0; });
    return w;
}

Acquisition acquisition_from(const cfg::Config& c, const Grid2D& grid) {
    c.require_section("acquisition");
    const std::string a = "acquisition";
    std::vector<Point2> src = points(c, a, "source_positions");
    if (src.empty()) {
        const auto n = c.get_size(a, "sources", 1);
        const double inset = 5.0 * grid.dx();
        src = exp::line_of_points(n, c.get_double(a, "source_x0", grid.x0() + inset),
                                  c.get_double(a, "source_x1", grid.x_max() - inset),
                                  c.get_double(a, "source_depth", grid.z0() + 2.0 * grid.dz()));
    }
    std::vector<Point2> rec = points(c, a, "receiver_positions");
    if (rec.empty()) {
        const auto n = c.get_size(a, "receivers", 0);
        if (n == 0) throw ConfigError("[acquisition] needs receivers or receiver_positions", c.line_of(a, "receivers"));
        const auto layout = c.get_string(a, "receiver_layout", "line");
        if (layout == "line") {
            rec = exp::line_of_points(n, c.get_double(a, "receiver_x0", grid.x0()), c.get_double(a, "receiver_x1", grid.x_max()),
                                      c.get_double(a, "receiver_depth", grid.z0() + 2.0 * grid.dz()));
        } else if (layout == "three_sided") {
            rec = exp::three_sided_receivers(n, grid, c.get_double(a, "receiver_inset", 2.0 * grid.dx()));
        } else {
            throw ConfigError("[acquisition] receiver_layout must be line or three_sided", c.line_of(a, "receiver_layout"));
        }
    }
    const auto wavelet = wavelet_from(c);
    return checked(c, a, [&] {
        Acquisition acq(std::move(src), std::move(rec), wavelet);
        acq.validate(grid);
        return acq;
    });
}

normalize::Kind parse_normalization_kind(const std::string& name) {
    for (auto k : {normalize::Kind::linear, normalize::Kind::exponential, normalize::Kind::sign_sensitive,
                   normalize::Kind::square})
        if (kind_name(k) == name) return k;
    throw ParameterError("unknown normalization '" + name + "' (linear, exponential, sign_sensitive, square)");
}

normalize::Normalization normalization_from(const cfg::Config& c, const normalize::Normalization& fallback) {
    normalize::Normalization n = fallback;
    const auto kind = c.get_string("normalization", "kind", "");
    if (!kind.empty()) n.kind = checked(c, "normalization", [&] { return parse_normalization_kind(kind); });
    n.c = c.get_double("normalization", "c", n.c);
    n.floor = c.get_double("normalization", "floor", n.floor);
    n.per_trace = c.get_bool("normalization", "per_trace", n.per_trace);
    checked(c, "normalization", [&] { n.validate(); return 0; });
    return n;
}

ma::MaParams ma_params_from(const cfg::Config& c) {
    ma::MaParams p;
    p.delta = c.get_double("ma", "delta", p.delta);
    p.epsilon_filter = c.get_double("ma", "epsilon", p.epsilon_filter);
    p.newton_tol = c.get_double("ma", "newton_tol", p.newton_tol);
    p.max_newton = c.get_size("ma", "max_newton", p.max_newton);
    p.damping = c.get_double("ma", "damping", p.damping);
    p.continuation = c.get_bool("ma", "continuation", p.continuation);
    checked(c, "ma", [&] { p.validate(); return 0; });
    return p;
}

ma::DensityOptions density_options_from(const cfg::Config& c) {
    ma::DensityOptions d;
    d.n = c.get_size("ma", "n", d.n);
    d.smooth_sigma = c.get_double("ma", "smooth_sigma", d.smooth_sigma);
    if (d.n < 3) throw ConfigError("[ma] n must be >= 3", c.line_of("ma", "n"));
    if (!(d.smooth_sigma >= 0.0)) throw ConfigError("[ma] smooth_sigma must be >= 0", c.line_of("ma", "smooth_sigma"));
    return d;
}

misfit::MisfitKind misfit_from(const cfg::Config& c) {
    misfit::MisfitKind m;
    m.kind = checked(c, "misfit", [&] { return misfit::parse_kind(c.get_string("misfit", "kind", "l2")); });
    m.fallback_to_trace = c.get_bool("misfit", "fallback", true);
    m.normalization = normalization_from(c);
    if (m.kind == misfit::Kind::w2_global) {
        m.ma_params = ma_params_from(c);
        m.density = density_options_from(c);
    }
    checked(c, "misfit", [&] { m.validate(); return 0; });
    return m;
}

opt::LbfgsConfig lbfgs_from(const cfg::Config& c) {
    opt::LbfgsConfig o;
    const std::string s = "optimizer";
    o.max_iters = c.get_size(s, "iterations", o.max_iters);
    o.memory = c.get_size(s, "memory", o.memory);
    o.grad_tol = c.get_double(s, "grad_tol", o.grad_tol);
    o.wolfe_c1 = c.get_double(s, "wolfe_c1", o.wolfe_c1);
    o.wolfe_c2 = c.get_double(s, "wolfe_c2", o.wolfe_c2);
    o.initial_step = c.get_double(s, "initial_step", o.initial_step);
    o.max_line_search = c.get_size(s, "max_line_search", o.max_line_search);
    checked(c, s, [&] { o.validate(); return 0; });
    return o;
}

// ---- context and dispatch ----

Context make_context(cfg::Config& c, const std::string& output_dir_flag, std::ostream* log) {
    const auto threads = c.get_size("run", "threads", 0);
    c.get_u64("run", "seed", 0);
    set_thread_count(static_cast<int>(threads));
    const auto dir = c.get_string("output", "dir", "output");
    return Context{output_dir_flag.empty() ? fs::path(dir) : fs::path(output_dir_flag), log};
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"forward", "invert", "rtm", "lsrtm", "ma-solve", "sensitivity", "noise", "tomo"};
    return names;
}

void run(const std::string& command, const cfg::Config& c, const Context& ctx) {
    if (command == "forward") return cmd_forward(c, ctx);
    if (command == "invert") return cmd_invert(c, ctx);
    if (command == "rtm") return cmd_rtm(c, ctx);
    if (command == "lsrtm") return cmd_lsrtm(c, ctx);
    if (command == "ma-solve") return cmd_masolve(c, ctx);
    if (command == "sensitivity") return cmd_sensitivity(c, ctx);
    if (command == "noise") return cmd_noise(c, ctx);
    if (command == "tomo") return cmd_tomo(c, ctx);
    throw ParameterError("unknown command '" + command + "'");
}

int exit_code(const std::exception_ptr& error) {
    if (!error) return 0;
    try {
        std::rethrow_exception(error);
    } catch (const ConfigError&) {
        return 2;
    } catch (const ParameterError&) {
        return 2;
    } catch (const ValidationError&) {
        return 2;
    } catch (const IoError&) {
        return 2;
    } catch (const NumericalError&) {
        return 3;
    } catch (const StabilityError&) {
        return 3;
    } catch (const DomainError&) {
        return 3;
    } catch (...) {
        return 1;
    }
}

std::vector<std::pair<std::string, std::string>> read_summary(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) out.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    return out;
}

// ---- forward ----

void cmd_forward(const cfg::Config& c, const Context& ctx) {
    const auto grid = grid_from(c);
    auto sim = sim_from(c);
    const auto model = model_from(c, grid);
    const auto acq = acquisition_from(c, grid);
    const auto time = time_from(c, grid, sim, model.c_max());
    const bool pgm = c.get_bool("output", "pgm", true);
    const bool movie = c.get_bool("output", "movie", false);
    const auto movie_frames = c.get_size("output", "movie_frames", 8);
    c.check_all_used();

    const auto& out = prepare(ctx);
    if (sim.sponge_velocity == 0.0) sim.sponge_velocity = model.c_max();
    io::write_grid_file(model, out / "model.fwigrid");
    if (pgm) io::write_pgm(model.velocity(), out / "model.pgm");
    for (std::size_t s = 0; s < acq.sources().size(); ++s) {
        const auto res = wave::forward(model, acq, time, sim, s, movie && s == 0);
        io::write_shot_file(res.record, out / indexed("shot_", s, 3, ".fwigath"));
        if (pgm) io::write_pgm(transposed(res.record.samples()), out / indexed("gather_", s, 3, ".pgm"));
        if (res.movie && movie_frames > 0) {
            const auto& mv = *res.movie;
            const std::size_t k = std::min(movie_frames, mv.frame_count());
            Array2D strip(grid.nz(), grid.nx() * k);
            for (std::size_t f = 0; f < k; ++f) {
                const auto& frame = mv.frame((f + 1) * (mv.frame_count() - 1) / k);
                for (std::size_t iz = 0; iz < grid.nz(); ++iz)
                    for (std::size_t ix = 0; ix < grid.nx(); ++ix) strip(iz, f * grid.nx() + ix) = frame(iz, ix);
            }
            io::write_pgm(strip, out / "movie_000.pgm");
        }
        say(ctx, "shot " + std::to_string(s) + " written");
    }
    write_summary({{"command", "forward"},
                   {"shots", std::to_string(acq.sources().size())},
                   {"receivers", std::to_string(acq.receivers().size())},
                   {"nt", std::to_string(time.nt())},
                   {"dt", num(time.dt())}},
                  out / "summary.txt");
}

// ---- invert ----

void cmd_invert(const cfg::Config& c, const Context& ctx) {
    const auto grid = grid_from(c);
    auto sim = sim_from(c);
    const auto bounds = bounds_from(c);
    std::optional<VelocityModel> truth;
    if (c.has_section("model")) truth = model_from(c, grid);
    const auto observed_dir = c.get_string("acquisition", "observed", "");
    if (observed_dir.empty() && !truth)
        throw ConfigError("invert needs a [model] truth (synthetic mode) or [acquisition] observed");
    const auto start = initial_from(c, grid, truth ? &*truth : nullptr);
    const auto acq = acquisition_from(c, grid);
    const auto time = time_from(c, grid, sim, bounds.c_max);
    exp::InversionSetup setup{acq, time, sim, misfit_from(c), lbfgs_from(c), {}, 0.0};
    setup.gradient.source_mask_radius = c.get_double("optimizer", "mask_radius", setup.gradient.source_mask_radius);
    setup.gradient_smoothing = c.get_double("optimizer", "smoothing", 0.0);
    const auto every = std::max<std::size_t>(1, c.get_size("optimizer", "snapshot_every", 10));
    const bool pgm = c.get_bool("output", "pgm", true);
    const bool resume = c.get_bool("output", "resume", true);
    c.check_all_used();

    const auto& out = prepare(ctx);
    if (setup.sim.sponge_velocity == 0.0) setup.sim.sponge_velocity = start.c_max();
    const bool synthetic = observed_dir.empty();
    const auto observed = synthetic ? exp::synthesize(*truth, acq, time, setup.sim) : read_observed(observed_dir, acq, time);
    say(ctx, synthetic ? "observed data synthesized from [model] (inverse crime)" : "observed data read from " + observed_dir);

    io::Table history;
    history.header = {"iter", "J", "J_rel", "grad_norm", "step_length", "wall_seconds"};
    if (truth) history.header.push_back("rmse");
    std::size_t offset = 0;
    double j0 = std::numeric_limits<double>::quiet_NaN();
    VelocityModel current = start;
    const auto ckpt = out / "checkpoint.fwigrid", state = out / "checkpoint.csv", hist = out / "history.csv";
    if (resume && fs::exists(ckpt) && fs::exists(state) && fs::exists(hist)) {
        const auto st = io::read_csv(state);
        auto old = io::read_csv(hist);
        if (st.rows.size() == 1 && old.header == history.header) {
            offset = static_cast<std::size_t>(st.rows[0][st.column("iter")]);
            j0 = st.rows[0][st.column("J0")];
            current = io::read_grid_file(ckpt, bounds);
            if (!(current.grid() == grid)) throw ValidationError("checkpoint grid does not match [grid]");
            std::erase_if(old.rows, [&](const auto& r) { return r[0] > static_cast<double>(offset); });
            history = std::move(old);
            say(ctx, "resuming from checkpoint at iteration " + std::to_string(offset));
        }
    }
    setup.optimizer.max_iters -= std::min(offset, setup.optimizer.max_iters);

    const auto on_iter = [&](const opt::IterationRecord& r, const VelocityModel& m) {
        if (offset > 0 && r.iter == 0) return true;
        if (std::isnan(j0)) j0 = r.value;
        const std::size_t it = r.iter + offset;
        std::vector<double> row{static_cast<double>(it), r.value, j0 > 0.0 ? r.value / j0 : 0.0, r.grad_norm, r.step, r.wall_seconds};
        if (truth) row.push_back(exp::velocity_rmse(m, *truth));
        history.rows.push_back(row);
        io::write_csv(history, hist);
        io::write_grid_file(m, ckpt);
        io::write_csv(io::Table{{"iter", "J0"}, {{static_cast<double>(it), j0}}}, state);
        if (it % every == 0) {
            io::write_grid_file(m, out / indexed("model_", it, 4, ".fwigrid"));
            if (pgm) io::write_pgm(m.velocity(), out / indexed("model_", it, 4, ".pgm"));
        }
        std::ostringstream line;
        line << "iter " << it << "  J " << r.value << "  J/J0 " << row[2];
        if (truth) line << "  rmse " << row.back();
        say(ctx, line.str());
        return true;
    };

    Summary summary{{"command", "invert"},
                    {"mode", synthetic ? "inverse_crime" : "observed"},
                    {"misfit", misfit::to_string(setup.misfit.kind)},
                    {"normalization", kind_name(setup.misfit.normalization.kind)}};
    if (truth) summary.emplace_back("initial_rmse", num(exp::velocity_rmse(start, *truth)));
    try {
        const auto res = exp::invert(setup, current, observed, nullptr, on_iter);
        io::write_grid_file(res.model, out / "model_final.fwigrid");
        if (pgm) io::write_pgm(res.model.velocity(), out / "model_final.pgm");
        summary.emplace_back("stop_reason", opt::to_string(res.run.reason));
        summary.emplace_back("iterations", num(history.rows.empty() ? 0.0 : history.rows.back()[0]));
        summary.emplace_back("J0", num(j0));
        summary.emplace_back("J_final", num(history.rows.back()[1]));
        summary.emplace_back("J_rel", num(history.rows.back()[2]));
        if (truth) summary.emplace_back("final_rmse", num(exp::velocity_rmse(res.model, *truth)));
        summary.emplace_back("fallback_shots", std::to_string(res.fallbacks));
        write_summary(summary, out / "summary.txt");
    } catch (const opt::OptimizerAbort& e) {
        const VelocityModel last(grid, Array2D(grid.nz(), grid.nx(), e.x()), bounds);
        io::write_grid_file(last, out / "abort_model.fwigrid");
        summary.emplace_back("stop_reason", std::string("aborted: ") + e.what());
        write_summary(summary, out / "summary.txt");
        throw;
    }
}

// ---- migration ----

void cmd_rtm(const cfg::Config& c, const Context& ctx) {
    const auto grid = grid_from(c);
    auto sim = sim_from(c);
    const auto truth = model_from(c, grid);
    const auto background = initial_from(c, grid, &truth);
    const auto acq = acquisition_from(c, grid);
    const auto time = time_from(c, grid, sim, std::max(truth.c_max(), background.c_max()));
    const bool pgm = c.get_bool("output", "pgm", true);
    c.check_all_used();

    const auto& out = prepare(ctx);
    if (sim.sponge_velocity == 0.0) sim.sponge_velocity = std::max(truth.c_max(), background.c_max());
    const auto d_true = exp::synthesize(truth, acq, time, sim);
    const auto d_bg = exp::synthesize(background, acq, time, sim);
    std::vector<ShotRecord> residual;
    for (std::size_t s = 0; s < d_true.size(); ++s) {
        Array2D r = d_true[s].samples();
        for (std::size_t k = 0; k < r.size(); ++k) r.values()[k] -= d_bg[s].samples().values()[k];
        residual.emplace_back(time, std::move(r), s);
    }
    const auto image = adjoint::rtm_image(background, acq, time, sim, residual);
    io::write_grid_file(grid, image.values, out / "rtm.fwigrid");
    if (pgm) io::write_pgm(image.values, out / "rtm.pgm");
    write_summary({{"command", "rtm"}, {"shots", std::to_string(acq.sources().size())}}, out / "summary.txt");
    say(ctx, "rtm image written");
}

void cmd_lsrtm(const cfg::Config& c, const Context& ctx) {
    const auto grid = grid_from(c);
    auto sim = sim_from(c);
    const auto background = model_from(c, grid);
    const auto acq = acquisition_from(c, grid);
    const auto time = time_from(c, grid, sim, background.c_max());
    c.require_section("lsrtm");
    const auto scatterers = points(c, "lsrtm", "scatterers");
    if (scatterers.empty()) throw ConfigError("[lsrtm] scatterers = \"x z; x z ...\" is required", c.line_of("lsrtm", "scatterers"));
    const double amplitude = c.get_double("lsrtm", "amplitude", 0.1);
    born::LsrtmOptions opts;
    opts.iterations = c.get_size("lsrtm", "iterations", opts.iterations);
    opts.cache_background = c.get_bool("lsrtm", "cache", false);
    const bool pgm = c.get_bool("output", "pgm", true);
    for (const auto& p : scatterers)
        if (!grid.contains(p)) throw ConfigError("[lsrtm] scatterer outside the grid", c.line_of("lsrtm", "scatterers"));
    c.check_all_used();

    const auto& out = prepare(ctx);
    if (sim.sponge_velocity == 0.0) sim.sponge_velocity = background.c_max();
    Array2D m1(grid.nz(), grid.nx());
    for (const auto& p : scatterers) {
        const auto ix = static_cast<std::size_t>(std::lround((p.x - grid.x0()) / grid.dx()));
        const auto iz = static_cast<std::size_t>(std::lround((p.z - grid.z0()) / grid.dz()));
        m1(iz, ix) += amplitude * background.m()(iz, ix);
    }
    const auto data = born::born_forward(background, {grid, m1}, acq, time, sim);
    const auto res = born::lsrtm(background, acq, time, sim, data, opts);
    io::Table t{{"iter", "residual", "relative"}, {}};
    bool decreasing = true;
    for (std::size_t k = 0; k < res.residual_norms.size(); ++k) {
        t.rows.push_back({static_cast<double>(k), res.residual_norms[k], res.residual_norms[k] / res.residual_norms[0]});
        if (k > 0 && !(res.residual_norms[k] < res.residual_norms[k - 1])) decreasing = false;
    }
    io::write_csv(t, out / "lsrtm.csv");
    io::write_grid_file(grid, res.reflectivity.values, out / "reflectivity.fwigrid");
    if (pgm) io::write_pgm(res.reflectivity.values, out / "reflectivity.pgm");
    write_summary({{"command", "lsrtm"},
                   {"iterations", std::to_string(res.residual_norms.size() - 1)},
                   {"final_relative_residual", num(t.rows.back()[2])},
                   {"strictly_decreasing", decreasing ? "true" : "false"}},
                  out / "summary.txt");
    say(ctx, "lsrtm relative residual " + num(t.rows.back()[2]));
}

// ---- Monge-Ampere ----

void cmd_masolve(const cfg::Config& c, const Context& ctx) {
    const auto params = ma_params_from(c);
    const auto n = density_options_from(c).n;
    const double background = c.get_double("densities", "background", 1.0);
    if (!(background > 0.0)) throw ConfigError("[densities] background must be positive", c.line_of("densities", "background"));
    const auto blobs = [&](const std::string& key) {
        auto groups = c.get_groups("densities", key);
        for (auto& g : groups) {
            if (g.size() == 3) g.push_back(1.0);
            if (g.size() != 4 || !(g[2] > 0.0))
                throw ConfigError("[densities] " + key + ": each group is 'cx cy sigma [weight]' with sigma > 0",
                                  c.line_of("densities", key));
        }
        return groups;
    };
    const auto fb = blobs("f"), gb = blobs("g");
    const bool pgm = c.get_bool("output", "pgm", true);
    c.check_all_used();

    const auto grid = ma::unit_grid(n);
    const auto density = [&](const std::vector<std::vector<double>>& bl) {
        Array2D p(n, n);
        for (std::size_t i2 = 0; i2 < n; ++i2)
            for (std::size_t i1 = 0; i1 < n; ++i1) {
                double v = background;
                for (const auto& b : bl) {
                    const double d1 = grid.x(i1) - b[0], d2 = grid.z(i2) - b[1];
                    v += b[3] * std::exp(-(d1 * d1 + d2 * d2) / (2.0 * b[2] * b[2]));
                }
                p(i2, i1) = v;
            }
        return ma::make_density(grid, std::move(p));
    };
    const auto f = density(fb), g = density(gb);
    const auto& out = prepare(ctx);
    io::Table hist{{"iter", "residual"}, {}};
    try {
        const auto sol = ma::ma_solve(f, g, params);
        for (std::size_t k = 0; k < sol.history.size(); ++k) hist.rows.push_back({static_cast<double>(k), sol.history[k]});
        io::write_csv(hist, out / "ma_history.csv");
        io::write_grid_file(grid, sol.u, out / "potential.fwigrid");
        if (pgm) io::write_pgm(sol.u, out / "potential.pgm");
        const double w2 = ma::w2_squared_2d(f, g, sol);
        write_summary({{"command", "ma-solve"},
                       {"n", std::to_string(n)},
                       {"w2_squared", num(w2)},
                       {"newton_iters", std::to_string(sol.newton_iters)},
                       {"residual", num(sol.residual_norm)},
                       {"monotone_only", sol.params.monotone_only ? "true" : "false"},
                       {"delta", num(sol.params.delta)},
                       {"epsilon", num(sol.params.epsilon)}},
                      out / "summary.txt");
        say(ctx, "W2^2 = " + num(w2));
    } catch (const ConvergenceError& e) {
        for (std::size_t k = 0; k < e.history().size(); ++k) hist.rows.push_back({static_cast<double>(k), e.history()[k]});
        io::write_csv(hist, out / "ma_history.csv");
        throw;
    }
}

// ---- misfit studies ----

void cmd_sensitivity(const cfg::Config& c, const Context& ctx) {
    exp::SensitivitySpec s;
    const std::string k = "sensitivity";
    s.frequency = c.get_double(k, "frequency", s.frequency);
    s.first = c.get_double(k, "first", s.first);
    s.second = c.get_double(k, "second", s.second);
    s.first_amp = c.get_double(k, "first_amp", s.first_amp);
    s.second_amp = c.get_double(k, "second_amp", s.second_amp);
    s.length = c.get_double(k, "length", s.length);
    s.dt = c.get_double(k, "dt", s.dt);
    s.shift_min = c.get_double(k, "shift_min", s.shift_min);
    s.shift_max = c.get_double(k, "shift_max", s.shift_max);
    s.shift_step = c.get_double(k, "shift_step", s.shift_step);
    s.normalization = normalization_from(c, s.normalization);
    if (!(s.dt > 0.0) || !(s.length > s.dt)) throw ConfigError("[sensitivity] need dt > 0 and length > dt", c.line_of(k, "dt"));
    c.check_all_used();

    const auto t = checked(c, k, [&] { return exp::sensitivity_sweep(s); });
    const auto& out = prepare(ctx);
    io::write_csv(t, out / "sensitivity.csv");
    Summary summary{{"command", "sensitivity"}, {"normalization", kind_name(s.normalization.kind)}};
    for (const auto* name : {"l2", "integral_l2", "w2_trace"}) {
        std::vector<double> col;
        for (const auto& r : t.rows) col.push_back(r[t.column(name)]);
        const auto changes = exp::derivative_sign_changes(col);
        const auto best = static_cast<std::size_t>(std::min_element(col.begin(), col.end()) - col.begin());
        summary.emplace_back(std::string("sign_changes_") + name, std::to_string(changes));
        summary.emplace_back(std::string("argmin_shift_") + name, num(t.rows[best][0]));
        say(ctx, std::string(name) + ": " + std::to_string(changes) + " derivative sign changes");
    }
    write_summary(summary, out / "summary.txt");
}

void cmd_noise(const cfg::Config& c, const Context& ctx) {
    exp::NoiseSpec s;
    const std::string k = "noise";
    s.nt = c.get_size(k, "nt", s.nt);
    s.dt = c.get_double(k, "dt", s.dt);
    s.frequency = c.get_double(k, "frequency", s.frequency);
    s.amplitude = c.get_double(k, "amplitude", s.amplitude);
    s.min_pieces_log2 = c.get_size(k, "min_pieces_log2", s.min_pieces_log2);
    s.max_pieces_log2 = c.get_size(k, "max_pieces_log2", s.max_pieces_log2);
    s.realizations = c.get_size(k, "realizations", s.realizations);
    s.seed = c.get_u64("run", "seed", s.seed);
    c.check_all_used();

    const auto t = checked(c, k, [&] { return exp::noise_study(s); });
    const auto& out = prepare(ctx);
    io::write_csv(t, out / "noise.csv");
    Summary summary{{"command", "noise"}, {"seed", std::to_string(s.seed)}};
    for (const auto* name : {"w2", "l2"}) {
        std::vector<double> x, y;
        for (const auto& r : t.rows) {
            x.push_back(r[0]);
            y.push_back(r[t.column(name)]);
        }
        const bool positive = std::all_of(y.begin(), y.end(), [](double v) { return v > 0.0; });
        const std::string slope = positive && y.size() >= 2 ? num(exp::loglog_slope(x, y)) : "undefined";
        summary.emplace_back(std::string("slope_") + name, slope);
        say(ctx, std::string(name) + " log-log slope " + slope);
    }
    write_summary(summary, out / "summary.txt");
}

// ---- traveltime tomography ----

void cmd_tomo(const cfg::Config& c, const Context& ctx) {
    exp::TomoSpec s;
    const std::string k = "tomo";
    s.v0 = c.get_double(k, "v0", s.v0);
    s.gradient = c.get_double(k, "gradient", s.gradient);
    s.depth = c.get_double(k, "depth", s.depth);
    s.dz = c.get_double(k, "dz", s.dz);
    s.max_turning_depth = c.get_double(k, "max_turning_depth", s.max_turning_depth);
    s.rays = c.get_size(k, "rays", s.rays);
    const bool pgm = c.get_bool("output", "pgm", true);
    if (!(s.dz > 0.0)) throw ConfigError("[tomo] dz must be positive", c.line_of(k, "dz"));
    c.check_all_used();

    const auto res = checked(c, k, [&] { return exp::tomo_roundtrip(s); });
    const auto& out = prepare(ctx);
    io::write_csv(res.rays, out / "rays.csv");
    io::write_csv(res.profile, out / "profile.csv");
    if (pgm) {
        constexpr std::size_t width = 16;
        Array2D img(res.profile.rows.size(), width);
        for (std::size_t i = 0; i < img.rows(); ++i)
            for (std::size_t j = 0; j < width; ++j) img(i, j) = res.profile.rows[i][1];
        io::write_pgm(img, out / "profile.pgm");
    }
    write_summary({{"command", "tomo"},
                   {"rays", std::to_string(s.rays)},
                   {"max_relative_error", num(res.max_relative_error)}},
                  out / "summary.txt");
    say(ctx, "max relative velocity error " + num(res.max_relative_error));
}

}  // namespace fwi::cli
