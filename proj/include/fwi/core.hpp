#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fwi {

struct Point2 {
    double x = 0.0;
    double z = 0.0;
};

/// Dense row-major 2D array of doubles.
class Array2D {
public:
    Array2D() = default;
    Array2D(std::size_t rows, std::size_t cols, double value = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, value) {}
    Array2D(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    void fill(double v);
    bool all_finite() const noexcept;

    friend bool operator==(const Array2D&, const Array2D&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Regular rectangular grid. Row index is depth (z), column index is x.
class Grid2D {
public:
    Grid2D(std::size_t nx, std::size_t nz, double dx, double dz, double x0 = 0.0, double z0 = 0.0);

    std::size_t nx() const noexcept { return nx_; }
    std::size_t nz() const noexcept { return nz_; }
    double dx() const noexcept { return dx_; }
    double dz() const noexcept { return dz_; }
    double x0() const noexcept { return x0_; }
    double z0() const noexcept { return z0_; }
    double x_max() const noexcept { return x0_ + dx_ * static_cast<double>(nx_ - 1); }
    double z_max() const noexcept { return z0_ + dz_ * static_cast<double>(nz_ - 1); }
    double x(std::size_t ix) const noexcept { return x0_ + dx_ * static_cast<double>(ix); }
    double z(std::size_t iz) const noexcept { return z0_ + dz_ * static_cast<double>(iz); }
    std::size_t cells() const noexcept { return nx_ * nz_; }

    bool contains(Point2 p) const noexcept;

    friend bool operator==(const Grid2D&, const Grid2D&) = default;

private:
    std::size_t nx_;
    std::size_t nz_;
    double dx_;
    double dz_;
    double x0_;
    double z0_;
};

struct VelocityBounds {
    double c_min = 300.0;
    double c_max = 8000.0;
};

/// Squared-slowness model m = 1/c^2 on a grid; nz x nx values.
class VelocityModel {
public:
    VelocityModel(Grid2D grid, Array2D m, VelocityBounds bounds = {});

    static VelocityModel from_velocity(Grid2D grid, const Array2D& c, VelocityBounds bounds = {});
    static VelocityModel constant_velocity(Grid2D grid, double c, VelocityBounds bounds = {});

    const Grid2D& grid() const noexcept { return grid_; }
    const Array2D& m() const noexcept { return m_; }
    const VelocityBounds& bounds() const noexcept { return bounds_; }

    Array2D velocity() const;
    double c_max() const noexcept;
    double c_min() const noexcept;

private:
    Grid2D grid_;
    Array2D m_;
    VelocityBounds bounds_;
};

class TimeAxis {
public:
    TimeAxis(std::size_t nt, double dt);

    std::size_t nt() const noexcept { return nt_; }
    double dt() const noexcept { return dt_; }
    double length() const noexcept { return dt_ * static_cast<double>(nt_); }
    double time(std::size_t i) const noexcept { return dt_ * static_cast<double>(i); }

    friend bool operator==(const TimeAxis&, const TimeAxis&) = default;

private:
    std::size_t nt_;
    double dt_;
};

enum class WaveletKind { ricker };

struct SourceWavelet {
    WaveletKind kind = WaveletKind::ricker;
    double peak_frequency = 15.0;
    double delay = 0.1;
    double highpass_cut = 0.0;  // Hz; 0 disables
    double amplitude = 1.0;

    void validate() const;
};

class Acquisition {
public:
    Acquisition(std::vector<Point2> sources, std::vector<Point2> receivers, SourceWavelet wavelet);

    const std::vector<Point2>& sources() const noexcept { return sources_; }
    const std::vector<Point2>& receivers() const noexcept { return receivers_; }
    const SourceWavelet& wavelet() const noexcept { return wavelet_; }

    /// Throws ValidationError if a position falls outside the grid's bounding box.
    void validate(const Grid2D& grid) const;

    /// Same receivers and wavelet, sources reordered by `order` (indices into sources()).
    Acquisition permuted(std::span<const std::size_t> order) const;

private:
    std::vector<Point2> sources_;
    std::vector<Point2> receivers_;
    SourceWavelet wavelet_;
};

/// Receiver-major time histories for one source: samples(r, it).
class ShotRecord {
public:
    ShotRecord(TimeAxis time, Array2D samples, std::size_t source_index = 0);

    static ShotRecord zeros(TimeAxis time, std::size_t receivers, std::size_t source_index = 0);

    const TimeAxis& time() const noexcept { return time_; }
    std::size_t receivers() const noexcept { return samples_.rows(); }
    std::size_t nt() const noexcept { return samples_.cols(); }
    std::size_t source_index() const noexcept { return source_index_; }
    const Array2D& samples() const noexcept { return samples_; }
    std::span<const double> trace(std::size_t r) const noexcept { return samples_.row(r); }

    friend bool operator==(const ShotRecord&, const ShotRecord&) = default;

private:
    TimeAxis time_;
    Array2D samples_;
    std::size_t source_index_;
};

/// Misfit value and its derivative with respect to the simulated samples (same shape as the record).
struct MisfitEvaluation {
    double value = 0.0;
    ShotRecord adjoint_source;
};

// Small vector helpers shared across modules.
double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm2(std::span<const double> a) noexcept;

}  // namespace fwi
