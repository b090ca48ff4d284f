#pragma once

#include <cstddef>
#include <vector>

#include "fwi/core.hpp"
#include "fwi/normalize.hpp"

namespace fwi::ma {

/// Positive density on an N x N node grid covering [0,1]^2. Row index is x2, column index is x1.
/// Mass uses trapezoid weights: sum p * weight = 1.
struct Density2D {
    Grid2D grid;
    Array2D p;
};

/// Square grid with n nodes per side on [0,1]^2.
Grid2D unit_grid(std::size_t n);

/// Trapezoid quadrature weights of a unit_grid, same layout as Density2D::p.
Array2D trapezoid_weights(const Grid2D& grid);

/// Rescales positive nodal values to unit trapezoid mass.
Density2D make_density(const Grid2D& grid, Array2D values);

struct MaParams {
    double delta = 0.0;           // 0: derived from the Lipschitz constant of f/g
    double epsilon_filter = 0.0;  // 0: sqrt(h)
    double newton_tol = 1e-9;
    std::size_t max_newton = 50;
    double damping = 0.5;
    double min_step = 1.0 / 64.0;
    bool continuation = true;  // on failure, walk the target from f to g

    void validate() const;
};

/// Parameters after defaults are filled in for a given pair of densities.
struct ResolvedParams {
    double delta;
    double epsilon;
    double lipschitz;  // estimate of K
    bool monotone_only = false;  // drop the filtered accurate branch
};

ResolvedParams resolve(const MaParams& params, const Density2D& f, const Density2D& g);

struct MaSolution {
    Array2D u;
    std::size_t newton_iters = 0;
    double residual_norm = 0.0;
    std::size_t pinned_index = 0;  // row-major node index (center of the grid)
    std::vector<double> history;   // residual max-norm per iterate, starting with the initial guess
    ResolvedParams params{};
};

/// max(a,d) max(b,d) + min(a,d) + min(b,d): the two-direction convexity-enforcing determinant.
double variational_determinant(double a, double b, double delta);

/// M_M + eps S((M_N - M_M) / eps) with the plateau filter S.
double filtered_operator(double monotone, double accurate, double epsilon);

/// Filtered scheme residual: interior nodes carry M_F[u], boundary nodes the Neumann
/// condition grad u . nu - x . nu. Throws DomainError when grad u leaves the target square by more than 10 h.
Array2D ma_residual(const Array2D& u, const Density2D& f, const Density2D& g, const ResolvedParams& params);
Array2D ma_residual(const Array2D& u, const Density2D& f, const Density2D& g, const MaParams& params);

/// Damped Newton solve starting from |x|^2 / 2. If that fails, the monotone scheme is solved (with
/// continuation in the target density) and used as a warm start; when the filtered scheme still fails,
/// the monotone solution is returned with params.monotone_only set. Throws ConvergenceError with the residual history.
MaSolution ma_solve(const Density2D& f, const Density2D& g, const MaParams& params = {});

/// Discrete gradient of u used by the transport cost: central differences inside,
/// second-order one-sided differences normal to the boundary. Returns {D_x1 u, D_x2 u}.
std::pair<Array2D, Array2D> map_of(const Array2D& u, const Grid2D& grid);

/// sum_i f_i |x_i - D u(x_i)|^2 w_i.
double w2_squared_2d(const Density2D& f, const Density2D& g, const MaSolution& sol);

/// Derivative of w2_squared_2d (through the converged potential) with respect to the nodal values of f.
Array2D w2_gradient_2d(const Density2D& f, const Density2D& g, const MaSolution& sol);

struct DensityOptions {
    std::size_t n = 64;          // nodes per side of the density grid
    double smooth_sigma = 0.0;   // Gaussian width in data samples; 0 disables smoothing
};

/// Intermediate state kept so that density gradients can be pulled back to the data.
struct DataDensity {
    Density2D density;
    std::vector<double> jac;  // scaling derivative per data sample
    double mass = 0.0;        // trapezoid mass before normalization
    std::size_t receivers = 0;
    std::size_t nt = 0;
};

/// Receiver index and time become the x1 and x2 coordinates of [0,1]^2. The data are scaled,
/// optionally smoothed (reflecting Gaussian, mass preserving), resampled bilinearly to n x n and normalized.
DataDensity dataset_to_density(const ShotRecord& shot, const normalize::ScaleParams& params,
                               const DensityOptions& options = {});

/// Maps dJ/dp on the density grid back to dJ/d(raw sample), receivers x nt.
Array2D pullback_to_data(const DataDensity& d, const Array2D& grad, const DensityOptions& options = {});

/// Separable reflecting Gaussian smoothing of a receivers x nt array; symmetric, so it is its own transpose.
Array2D gaussian_smooth(const Array2D& a, double sigma);

}  // namespace fwi::ma
