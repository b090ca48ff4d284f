#include "fwi/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fwi/errors.hpp"

namespace fwi {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

Array2D::Array2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "Array2D: data size does not match rows*cols");
}

void Array2D::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Array2D::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Grid2D::Grid2D(std::size_t nx, std::size_t nz, double dx, double dz, double x0, double z0)
    : nx_(nx), nz_(nz), dx_(dx), dz_(dz), x0_(x0), z0_(z0) {
    require(nx >= 2 && nz >= 2, "Grid2D: need nx >= 2 and nz >= 2");
    require(finite_positive(dx) && finite_positive(dz), "Grid2D: spacings must be finite and positive");
    require(std::isfinite(x0) && std::isfinite(z0), "Grid2D: origin must be finite");
}

bool Grid2D::contains(Point2 p) const noexcept {
    const double tol = 1e-9 * std::max(dx_, dz_);
    return p.x >= x0_ - tol && p.x <= x_max() + tol && p.z >= z0_ - tol && p.z <= z_max() + tol;
}

VelocityModel::VelocityModel(Grid2D grid, Array2D m, VelocityBounds bounds)
    : grid_(grid), m_(std::move(m)), bounds_(bounds) {
    require(m_.rows() == grid_.nz() && m_.cols() == grid_.nx(), "VelocityModel: array shape must be nz x nx");
    require(finite_positive(bounds_.c_min) && bounds_.c_max > bounds_.c_min, "VelocityModel: invalid velocity bounds");
    const double m_lo = 1.0 / (bounds_.c_max * bounds_.c_max);
    const double m_hi = 1.0 / (bounds_.c_min * bounds_.c_min);
    for (double v : m_.values()) {
        require(finite_positive(v), "VelocityModel: squared slowness must be finite and positive");
        require(v >= m_lo * (1.0 - 1e-12) && v <= m_hi * (1.0 + 1e-12),
                "VelocityModel: velocity outside bounds [" + std::to_string(bounds_.c_min) + ", " +
                    std::to_string(bounds_.c_max) + "] m/s");
    }
}

VelocityModel VelocityModel::from_velocity(Grid2D grid, const Array2D& c, VelocityBounds bounds) {
    Array2D m(c.rows(), c.cols());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double v = c.values()[i];
        require(finite_positive(v), "VelocityModel: velocity must be finite and positive");
        m.values()[i] = 1.0 / (v * v);
    }
    return VelocityModel(grid, std::move(m), bounds);
}

VelocityModel VelocityModel::constant_velocity(Grid2D grid, double c, VelocityBounds bounds) {
    return from_velocity(grid, Array2D(grid.nz(), grid.nx(), c), bounds);
}

Array2D VelocityModel::velocity() const {
    Array2D c(m_.rows(), m_.cols());
    for (std::size_t i = 0; i < m_.size(); ++i) c.values()[i] = 1.0 / std::sqrt(m_.values()[i]);
    return c;
}

double VelocityModel::c_max() const noexcept {
    return 1.0 / std::sqrt(*std::min_element(m_.values().begin(), m_.values().end()));
}

double VelocityModel::c_min() const noexcept {
    return 1.0 / std::sqrt(*std::max_element(m_.values().begin(), m_.values().end()));
}

TimeAxis::TimeAxis(std::size_t nt, double dt) : nt_(nt), dt_(dt) {
    require(nt >= 2, "TimeAxis: need nt >= 2");
    require(finite_positive(dt), "TimeAxis: dt must be finite and positive");
}

void SourceWavelet::validate() const {
    require(finite_positive(peak_frequency), "SourceWavelet: peak frequency must be positive");
    require(std::isfinite(delay) && delay >= 0.0, "SourceWavelet: delay must be >= 0");
    require(std::isfinite(highpass_cut) && highpass_cut >= 0.0, "SourceWavelet: high-pass cut must be >= 0");
    require(std::isfinite(amplitude), "SourceWavelet: amplitude must be finite");
}

Acquisition::Acquisition(std::vector<Point2> sources, std::vector<Point2> receivers, SourceWavelet wavelet)
    : sources_(std::move(sources)), receivers_(std::move(receivers)), wavelet_(wavelet) {
    require(!receivers_.empty(), "Acquisition: receiver list must be non-empty");
    for (const auto& p : sources_) require(std::isfinite(p.x) && std::isfinite(p.z), "Acquisition: non-finite source");
    for (const auto& p : receivers_)
        require(std::isfinite(p.x) && std::isfinite(p.z), "Acquisition: non-finite receiver");
    wavelet_.validate();
}

void Acquisition::validate(const Grid2D& grid) const {
    for (std::size_t i = 0; i < sources_.size(); ++i)
        require(grid.contains(sources_[i]), "Acquisition: source " + std::to_string(i) + " outside the grid");
    for (std::size_t i = 0; i < receivers_.size(); ++i)
        require(grid.contains(receivers_[i]), "Acquisition: receiver " + std::to_string(i) + " outside the grid");
}

Acquisition Acquisition::permuted(std::span<const std::size_t> order) const {
    require(order.size() == sources_.size(), "Acquisition::permuted: order size mismatch");
    std::vector<Point2> src;
    src.reserve(order.size());
    for (std::size_t k : order) {
        require(k < sources_.size(), "Acquisition::permuted: index out of range");
        src.push_back(sources_[k]);
    }
    return Acquisition(std::move(src), receivers_, wavelet_);
}

ShotRecord::ShotRecord(TimeAxis time, Array2D samples, std::size_t source_index)
    : time_(time), samples_(std::move(samples)), source_index_(source_index) {
    require(samples_.rows() >= 1, "ShotRecord: need at least one receiver");
    require(samples_.cols() == time_.nt(), "ShotRecord: sample count does not match the time axis");
    require(samples_.all_finite(), "ShotRecord: samples must be finite");
}

ShotRecord ShotRecord::zeros(TimeAxis time, std::size_t receivers, std::size_t source_index) {
    return ShotRecord(time, Array2D(receivers, time.nt()), source_index);
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

}  // namespace fwi
