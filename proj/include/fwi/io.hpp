#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fwi/core.hpp"

namespace fwi::io {

/// Grid plus raw values as stored in an FWIGRID1 file; no positivity requirement.
struct GridData {
    Grid2D grid;
    Array2D values;
};

// FWIGRID1: magic, u64 nx, u64 nz, f64 dx, dz, x0, z0, then nz*nx f64 row-major (row = z).
void write_grid_file(const Grid2D& grid, const Array2D& values, const std::filesystem::path& path);
void write_grid_file(const VelocityModel& model, const std::filesystem::path& path);
GridData read_grid_data(const std::filesystem::path& path);
VelocityModel read_grid_file(const std::filesystem::path& path, VelocityBounds bounds = {});

// FWIGATH1: magic, u64 receivers, u64 nt, f64 dt, u64 source_index, then receivers*nt f64.
void write_shot_file(const ShotRecord& shot, const std::filesystem::path& path);
ShotRecord read_shot_file(const std::filesystem::path& path);

/// Header row plus numeric rows; values are written in the shortest form that reads back exactly.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const;  // throws IoError if absent
};

void write_csv(const Table& table, const std::filesystem::path& path);
Table read_csv(const std::filesystem::path& path);

/// Binary P5 image, 8 bit. Values are clipped to mean +- 3 standard deviations and mapped linearly,
/// lowest to black. Row 0 is the top of the image.
void write_pgm(const Array2D& values, const std::filesystem::path& path);

}  // namespace fwi::io
