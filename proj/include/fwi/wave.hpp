#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fwi/core.hpp"

namespace fwi::wave {

enum class Boundary { sponge };

struct SimConfig {
    int spatial_order = 4;  // 2 or 4
    Boundary boundary = Boundary::sponge;
    std::size_t sponge_width = 30;  // nodes added on each absorbing side
    double sponge_strength = 10.0;  // peak damping rate in units of c_ref / (width * h)
    double sponge_velocity = 0.0;   // c_ref in m/s; 0 uses the model's c_max
    double cfl_safety = 0.9;
    bool free_surface = false;      // top edge becomes a pressure-release boundary without sponge
    bool enforce_cfl = true;        // only diagnostics turn this off
    std::size_t movie_memory_cap = std::size_t{1} << 30;  // bytes; stride grows beyond this

    void validate() const;
};

/// Ricker wavelet A (1 - 2 pi^2 f^2 tau^2) exp(-pi^2 f^2 tau^2), tau = t - delay,
/// optionally high-passed with a zero-phase 4th-order Butterworth.
std::vector<double> ricker(const TimeAxis& time, const SourceWavelet& wavelet);

/// Zero-phase (forward-backward) 4th-order Butterworth high-pass.
void highpass_zero_phase(std::span<double> signal, double dt, double cut_hz);

/// Largest stable leapfrog step times cfg.cfl_safety.
double max_stable_dt(const VelocityModel& model, const SimConfig& cfg);

/// Snapshots of u(x, t) on the model grid; frame k is time index k * stride.
class WavefieldMovie {
public:
    WavefieldMovie(Grid2D grid, TimeAxis time, std::size_t stride);

    const Grid2D& grid() const noexcept { return grid_; }
    const TimeAxis& time() const noexcept { return time_; }
    std::size_t stride() const noexcept { return stride_; }
    std::size_t frame_count() const noexcept { return frames_.size(); }
    const Array2D& frame(std::size_t k) const { return frames_.at(k); }
    std::vector<Array2D>& frames() noexcept { return frames_; }
    const std::vector<Array2D>& frames() const noexcept { return frames_; }

    static std::size_t expected_frames(std::size_t nt, std::size_t stride) { return (nt - 1) / stride + 1; }

private:
    Grid2D grid_;
    TimeAxis time_;
    std::size_t stride_;
    std::vector<Array2D> frames_;
};

enum class Injection { nearest, bilinear };

/// A time series injected at a point with 1/(dx dz) scaling.
struct PointSource {
    Point2 position;
    std::span<const double> trace;  // nt samples
    Injection injection = Injection::nearest;
};

struct ForwardResult {
    ShotRecord record;
    std::optional<WavefieldMovie> movie;
};

/// Leapfrog solution of m u_tt - lap u = s, u = u_t = 0 at t = 0, sampled at the receivers
/// by bilinear interpolation.
ForwardResult simulate(const VelocityModel& model, const TimeAxis& time, const SimConfig& cfg,
                       std::span<const PointSource> sources, std::span<const Point2> receivers,
                       bool keep_movie = false, std::size_t source_index = 0);

/// Padded wavefields u^0..u^{nt-1} of one solve plus its receiver record.
struct ForwardHistory {
    std::vector<std::vector<double>> frames;
    ShotRecord record;
};

/// One shot of an acquisition with its Ricker wavelet at the nearest grid node.
ForwardResult forward(const VelocityModel& model, const Acquisition& acq, const TimeAxis& time,
                      const SimConfig& cfg, std::size_t source_index, bool keep_movie = false);

class Propagator;

/// Same stepping as simulate() but keeps every padded frame (needed for exact gradients).
ForwardHistory forward_history(const Propagator& prop, const TimeAxis& time, std::span<const PointSource> sources,
                               std::span<const Point2> receivers, std::size_t source_index = 0);

/// Checks dt against the stability limit when cfg.enforce_cfl is set.
void check_cfl(const VelocityModel& model, const SimConfig& cfg, double dt);

/// Discrete operator shared by the forward, adjoint and Born solvers.
///
/// Each step solves, on the sponge-padded grid,
///   M(1+a) u^k - (2M + dt^2 L) u^{k-1} + M(1-a) u^{k-2} = r^k
/// with L the symmetric Dirichlet Laplacian, M = diag(m) and a = sigma dt / 2 the sponge damping.
/// The space-time matrix of this recursion run backwards in time is its own transpose, which is
/// what makes the adjoint solve exact.
class Propagator {
public:
    Propagator(const VelocityModel& model, const SimConfig& cfg, double dt);

    std::size_t nx() const noexcept { return nxp_; }
    std::size_t nz() const noexcept { return nzp_; }
    std::size_t stride() const noexcept { return stride_; }
    std::size_t field_size() const noexcept { return stride_ * (nzp_ + 2 * kHalo); }
    double dt() const noexcept { return dt_; }
    double cell_area() const noexcept { return cell_area_; }

    /// Storage index of padded node (iz, ix).
    std::size_t index(std::size_t iz, std::size_t ix) const noexcept {
        return (iz + kHalo) * stride_ + ix + kHalo;
    }
    /// Storage index of model-grid node (iz, ix).
    std::size_t model_index(std::size_t iz, std::size_t ix) const noexcept {
        return index(iz + pad_top_, ix + pad_side_);
    }

    std::vector<double> make_field() const { return std::vector<double>(field_size(), 0.0); }

    /// next = homogeneous update from (prev, cur).
    void step(const double* prev, const double* cur, double* next) const noexcept;

    /// next[i] += amount / (M_i (1 + a_i)); amount is in row units of the recursion.
    void add_row_forcing(double* next, std::size_t i, double amount) const noexcept {
        next[i] += amount * inv_diag_[i];
    }

    struct Tap {
        std::size_t index;
        double weight;
    };
    std::vector<Tap> stencil(Point2 p, Injection mode) const;

    double sample(const double* field, std::span<const Tap> taps) const noexcept;
    /// Point injection of `value` with 1/(dx dz) scaling, converted to row units (times dt^2).
    void inject(double* next, std::span<const Tap> taps, double value) const noexcept;

    /// Row-Jacobian of the recursion with respect to m at node i:
    /// (1+a_i) u^k_i - 2 u^{k-1}_i + (1-a_i) u^{k-2}_i.
    double dA_dm(std::size_t i, double uk, double uk1, double uk2) const noexcept {
        return (1.0 + damp_[i]) * uk - 2.0 * uk1 + (1.0 - damp_[i]) * uk2;
    }

    /// Copy the model-grid part of a padded field.
    void extract(const double* field, Array2D& out) const;
    /// Sum a padded-grid nodal quantity back onto the model grid (transpose of edge replication).
    void fold_to_model(const std::vector<double>& padded, Array2D& out) const;
    /// Expand a model-grid array into a padded field by edge replication.
    std::vector<double> expand_from_model(const Array2D& values) const;

    /// Discrete energy between levels (cur, next); conserved without damping and forcing.
    double energy(const double* cur, const double* next) const noexcept;

    std::size_t model_nx() const noexcept { return model_nx_; }
    std::size_t model_nz() const noexcept { return model_nz_; }

    static constexpr std::size_t kHalo = 2;

private:
    void laplacian(const double* u, double* out) const noexcept;

    std::size_t model_nx_, model_nz_;
    std::size_t pad_side_, pad_top_, pad_bottom_;
    std::size_t nxp_, nzp_, stride_;
    double dx_, dz_, x0_, z0_, dt_, cell_area_;
    int order_;
    std::vector<double> m_;         // padded squared slowness
    std::vector<double> damp_;      // a = sigma dt / 2
    std::vector<double> two_m_;     // 2M
    std::vector<double> lag_coef_;  // M (1 - a)
    std::vector<double> inv_diag_;  // 1 / (M (1 + a))
    mutable std::vector<double> lap_;
};

}  // namespace fwi::wave
