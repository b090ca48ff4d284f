#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fwi/adjoint.hpp"
#include "fwi/core.hpp"
#include "fwi/io.hpp"
#include "fwi/misfit.hpp"
#include "fwi/optimize.hpp"
#include "fwi/raypath.hpp"
#include "fwi/wave.hpp"

namespace fwi::exp {

// ---- models and acquisitions ----

struct LensSpec {
    double background = 2000.0;  // m/s
    double anomaly = -0.2;       // relative velocity change at the lens center
    double center_x = 1000.0, center_z = 1000.0;
    double sigma = 250.0;        // m
};

VelocityModel lens_model(const Grid2D& grid, const LensSpec& lens, VelocityBounds bounds = {});

/// Velocity smoothed by a reflecting Gaussian of `sigma_cells` grid cells (the usual smoothed start model).
VelocityModel smoothed_model(const VelocityModel& model, double sigma_cells);

/// Evenly spaced points from (x0, z) to (x1, z); a single point sits at the midpoint.
std::vector<Point2> line_of_points(std::size_t count, double x0, double x1, double z);

/// Half of the points along the bottom edge, a quarter up each side, `inset` metres inside the grid.
std::vector<Point2> three_sided_receivers(std::size_t count, const Grid2D& grid, double inset);

/// RMS of the velocity difference in m/s.
double velocity_rmse(const VelocityModel& a, const VelocityModel& b);

/// One forward solve per source.
std::vector<ShotRecord> synthesize(const VelocityModel& model, const Acquisition& acq, const TimeAxis& time,
                                   const wave::SimConfig& cfg);

// ---- inversion ----

struct InversionSetup {
    Acquisition acquisition;
    TimeAxis time;
    wave::SimConfig sim;
    misfit::MisfitKind misfit;
    opt::LbfgsConfig optimizer;
    adjoint::GradientOptions gradient;
    double gradient_smoothing = 0.0;  // cells; 0 disables
};

struct InversionOutcome {
    VelocityModel model;
    opt::LbfgsResult run;
    std::vector<double> rmse;  // per history entry, when a truth model was given
    std::size_t fallbacks = 0;  // shots evaluated with w2_trace after an MA failure
};

/// Called with each accepted model; return false to stop.
using ModelCallback = std::function<bool(const opt::IterationRecord&, const VelocityModel&)>;

/// L-BFGS on the squared slowness with box bounds from the model's velocity bounds.
InversionOutcome invert(const InversionSetup& setup, const VelocityModel& start, std::span<const ShotRecord> observed,
                        const VelocityModel* truth = nullptr, const ModelCallback& callback = {});

io::Table history_table(const InversionOutcome& out);

/// Desk-scale lens inversion: 2 km square at 20 m, 2000 m/s background, lens -20% with sigma 400 m,
/// 8 sources across the top, 64 receivers on the other three sides, 6 Hz Ricker, homogeneous start.
struct ToyProblem {
    VelocityModel truth;
    VelocityModel start;
    InversionSetup setup;
};

ToyProblem toy_lens_problem(misfit::Kind kind, std::size_t iterations = 60);

// ---- shift sensitivity ----

struct SensitivitySpec {
    double frequency = 15.0;
    double first = 0.9, second = 1.2;     // s
    double first_amp = 1.0, second_amp = 0.8;
    double length = 2.0, dt = 0.002;
    double shift_min = -0.6, shift_max = 0.6, shift_step = 0.005;
    normalize::Normalization normalization{normalize::Kind::square};
};

std::vector<double> double_ricker(const TimeAxis& time, const SensitivitySpec& spec, double shift);

/// Columns shift, l2, integral_l2, w2_trace.
io::Table sensitivity_sweep(const SensitivitySpec& spec);

/// Sign changes of the discrete derivative (zero differences are skipped).
std::size_t derivative_sign_changes(std::span<const double> values);

// ---- noise ----

struct NoiseSpec {
    std::size_t nt = 16384;
    double dt = 1.0 / 8192.0;
    double frequency = 15.0;
    double amplitude = 1.0;        // noise half-width relative to max |signal|
    std::size_t min_pieces_log2 = 4, max_pieces_log2 = 12;
    std::size_t realizations = 8;  // averaged per N
    std::uint64_t seed = 2024;
};

/// Columns pieces, w2, l2 (squared distances between the clean and noisy trace, averaged).
io::Table noise_study(const NoiseSpec& spec);

/// Least-squares slope of log y against log x.
double loglog_slope(std::span<const double> x, std::span<const double> y);

// ---- traveltime tomography ----

struct TomoSpec {
    double v0 = 2000.0, gradient = 0.5;  // v(z) = v0 + gradient z
    double depth = 3000.0, dz = 5.0;     // forward profile
    double max_turning_depth = 2900.0;
    std::size_t rays = 400;
};

struct TomoResult {
    io::Table rays;     // p, T, X
    io::Table profile;  // z, v, v_true
    double max_relative_error = 0.0;
};

TomoResult tomo_roundtrip(const TomoSpec& spec);

}  // namespace fwi::exp
