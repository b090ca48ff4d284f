#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fwi/core.hpp"
#include "fwi/wave.hpp"

namespace fwi::adjoint {

/// Nodal values on a model grid: gradients, images, reflectivities.
struct GridField {
    Grid2D grid;
    Array2D values;
};
using GradientField = GridField;
using RtmImage = GridField;

/// Misfit of one shot: value and dJ/df for simulated data `sim` against observed `obs`.
using MisfitFunction = std::function<MisfitEvaluation(const ShotRecord& sim, const ShotRecord& obs)>;

struct GradientOptions {
    double source_mask_radius = 3.0;  // nodes; gradient zeroed this close to each source
};

struct GradientResult {
    double value = 0.0;
    GradientField gradient;
    std::vector<double> shot_values;
};

/// Backward solve of m v_tt - lap v = R^T a with v = v_t = 0 at t = T.
/// Frame k of the result is v at time index k on the model grid.
wave::WavefieldMovie adjoint_solve(const VelocityModel& model, std::span<const Point2> receivers,
                                   const ShotRecord& adjoint_source, const wave::SimConfig& cfg);

/// Runs the adjoint recursion driven by `adjoint_source` injected at `receivers` and calls
/// visit(k, v) with the padded field v^k for k = nt-1 down to 1.
void adjoint_sweep(const wave::Propagator& prop, std::span<const Point2> receivers, const ShotRecord& adjoint_source,
                   const std::function<void(std::size_t, const double*)>& visit);

/// Accumulates -(dx dz / dt^2) * sum_k v^k (dA/dm u)^k on the padded grid, the exact discrete
/// sensitivity pairing of an adjoint field with stored forward frames.
std::vector<double> correlate(const wave::Propagator& prop, const std::vector<std::vector<double>>& frames,
                              std::span<const Point2> receivers, const ShotRecord& adjoint_source);

/// Total misfit over shots and its gradient with respect to m (squared slowness).
GradientResult gradient(const VelocityModel& model, const Acquisition& acq, const TimeAxis& time,
                        const wave::SimConfig& cfg, std::span<const ShotRecord> observed,
                        const MisfitFunction& misfit, const GradientOptions& options = {});

/// Zero-lag cross-correlation of source wavefields with back-propagated observed data, summed over shots.
RtmImage rtm_image(const VelocityModel& background, const Acquisition& acq, const TimeAxis& time,
                   const wave::SimConfig& cfg, std::span<const ShotRecord> observed);

/// Order in which per-shot contributions are summed: by source position, so that
/// permuting the acquisition does not change a single bit of the total.
std::vector<std::size_t> reduction_order(std::span<const Point2> sources);

/// Sets gradient entries within `radius` nodes of any source to zero.
void mask_sources(GridField& field, std::span<const Point2> sources, double radius);

}  // namespace fwi::adjoint
