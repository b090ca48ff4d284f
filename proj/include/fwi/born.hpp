#pragma once

#include <span>
#include <vector>

#include "fwi/adjoint.hpp"

namespace fwi::born {

/// Perturbation m1 of the squared slowness on the background grid.
using Reflectivity = adjoint::GridField;

/// Linearized modeling operator L about a background m0 and its exact transpose.
class BornOperator {
public:
    BornOperator(VelocityModel background, Acquisition acq, TimeAxis time, wave::SimConfig cfg,
                 bool cache_background = false);

    /// Scattered records: m0 u1_tt - lap u1 = -m1 u0_tt, one per source.
    std::vector<ShotRecord> apply(const Array2D& m1) const;
    /// L^T d: adjoint solve driven by d correlated with -u0_tt.
    Array2D apply_transpose(std::span<const ShotRecord> data) const;

    const Grid2D& grid() const noexcept { return background_.grid(); }
    std::size_t shots() const noexcept { return acq_.sources().size(); }

private:
    const std::vector<std::vector<double>>& background_frames(const wave::Propagator& prop, std::size_t s,
                                                              std::vector<std::vector<double>>& scratch) const;

    VelocityModel background_;
    Acquisition acq_;
    TimeAxis time_;
    wave::SimConfig cfg_;
    std::vector<double> wavelet_;
    bool cache_;
    mutable std::vector<std::vector<std::vector<double>>> cache_frames_;
};

std::vector<ShotRecord> born_forward(const VelocityModel& m0, const Reflectivity& m1, const Acquisition& acq,
                                     const TimeAxis& time, const wave::SimConfig& cfg);

Reflectivity migrate(const VelocityModel& m0, const Acquisition& acq, const TimeAxis& time,
                     const wave::SimConfig& cfg, std::span<const ShotRecord> residual);

struct LsrtmOptions {
    std::size_t iterations = 10;
    double tolerance = 0.0;  // stop once ||r|| <= tolerance * ||d||
    bool cache_background = false;
};

struct LsrtmResult {
    Reflectivity reflectivity;
    std::vector<double> residual_norms;  // entry 0 is ||d||, then one per iteration
};

/// CGNR on min ||L m1 - d||^2.
LsrtmResult lsrtm(const VelocityModel& m0, const Acquisition& acq, const TimeAxis& time, const wave::SimConfig& cfg,
                  std::span<const ShotRecord> observed_scattered, const LsrtmOptions& options = {});

}  // namespace fwi::born
