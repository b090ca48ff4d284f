#pragma once

#include <atomic>
#include <span>
#include <string>

#include "fwi/adjoint.hpp"
#include "fwi/core.hpp"
#include "fwi/monge_ampere.hpp"
#include "fwi/normalize.hpp"

namespace fwi::misfit {

enum class Kind { l2, integral_l2, w2_trace, w2_global };

std::string to_string(Kind k);
/// Accepts the names produced by to_string; throws ParameterError otherwise.
Kind parse_kind(const std::string& name);

struct MisfitKind {
    Kind kind = Kind::l2;
    normalize::Normalization normalization{};  // transport kinds
    ma::MaParams ma_params{};                  // w2_global
    ma::DensityOptions density{};              // w2_global
    bool fallback_to_trace = true;             // w2_global: use w2_trace for a shot whose MA solve fails

    void validate() const;
};

/// J and dJ/dsim for one shot. w2_global lets ConvergenceError / DomainError from the MA solve
/// escape; make_function() applies the fallback.
MisfitEvaluation evaluate(const MisfitKind& kind, const ShotRecord& sim, const ShotRecord& obs);

MisfitEvaluation l2(const ShotRecord& sim, const ShotRecord& obs);
MisfitEvaluation integral_l2(const ShotRecord& sim, const ShotRecord& obs);
MisfitEvaluation w2_global(const ShotRecord& sim, const ShotRecord& obs, const normalize::Normalization& n,
                           const ma::MaParams& params, const ma::DensityOptions& density);

/// Per-shot callback for the adjoint machinery. Shots that fall back are counted in `fallbacks`.
adjoint::MisfitFunction make_function(const MisfitKind& kind, std::atomic<std::size_t>* fallbacks = nullptr);

adjoint::GradientResult gradient(const VelocityModel& model, const Acquisition& acq, const TimeAxis& time,
                                 const wave::SimConfig& cfg, std::span<const ShotRecord> observed,
                                 const MisfitKind& kind, const adjoint::GradientOptions& options = {});

}  // namespace fwi::misfit
