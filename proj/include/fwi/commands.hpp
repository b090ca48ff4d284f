#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fwi/config.hpp"
#include "fwi/experiments.hpp"
#include "fwi/misfit.hpp"
#include "fwi/monge_ampere.hpp"
#include "fwi/normalize.hpp"
#include "fwi/optimize.hpp"
#include "fwi/wave.hpp"

namespace fwi::cli {

// ---- config readers ----
// Each reader validates what it builds, so errors surface before any solve starts.

Grid2D grid_from(const cfg::Config& c);
wave::SimConfig sim_from(const cfg::Config& c);
VelocityBounds bounds_from(const cfg::Config& c);
/// [model]: `file`, or `background` plus an optional Gaussian lens.
VelocityModel model_from(const cfg::Config& c, const Grid2D& grid);
/// [initial] kind = homogeneous | smoothed | file | truth.
VelocityModel initial_from(const cfg::Config& c, const Grid2D& grid, const VelocityModel* truth);
/// [time]: nt or t_max; dt defaults to the stability limit at `c_ref`.
TimeAxis time_from(const cfg::Config& c, const Grid2D& grid, const wave::SimConfig& sim, double c_ref);
SourceWavelet wavelet_from(const cfg::Config& c);
Acquisition acquisition_from(const cfg::Config& c, const Grid2D& grid);
normalize::Kind parse_normalization_kind(const std::string& name);
/// [normalization]; keys that are absent keep the values of `fallback`.
normalize::Normalization normalization_from(const cfg::Config& c, const normalize::Normalization& fallback = {});
ma::MaParams ma_params_from(const cfg::Config& c);
ma::DensityOptions density_options_from(const cfg::Config& c);
misfit::MisfitKind misfit_from(const cfg::Config& c);
opt::LbfgsConfig lbfgs_from(const cfg::Config& c);

// ---- subcommands ----

struct Context {
    std::filesystem::path output_dir;  // created on demand
    std::ostream* log = nullptr;       // progress lines; null is silent
};

/// Applies --output-dir / --seed / --threads overrides to the config and resolves the output directory.
Context make_context(cfg::Config& c, const std::string& output_dir_flag, std::ostream* log);

void cmd_forward(const cfg::Config& c, const Context& ctx);
void cmd_invert(const cfg::Config& c, const Context& ctx);
void cmd_rtm(const cfg::Config& c, const Context& ctx);
void cmd_lsrtm(const cfg::Config& c, const Context& ctx);
void cmd_masolve(const cfg::Config& c, const Context& ctx);
void cmd_sensitivity(const cfg::Config& c, const Context& ctx);
void cmd_noise(const cfg::Config& c, const Context& ctx);
void cmd_tomo(const cfg::Config& c, const Context& ctx);

const std::vector<std::string>& command_names();
/// Dispatches by subcommand name; ParameterError for an unknown one.
void run(const std::string& command, const cfg::Config& c, const Context& ctx);

/// 0 none, 2 configuration or input problems, 3 numerical failures, 1 anything else.
int exit_code(const std::exception_ptr& error);

/// Reads `key = value` lines of a summary.txt.
std::vector<std::pair<std::string, std::string>> read_summary(const std::filesystem::path& path);

}  // namespace fwi::cli
