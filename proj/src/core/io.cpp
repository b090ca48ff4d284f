#include "fwi/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <limits>
#include <string>
#include <vector>

#include "fwi/errors.hpp"

namespace fwi::io {

namespace {

constexpr std::array<char, 8> kGridMagic{'F', 'W', 'I', 'G', 'R', 'I', 'D', '1'};
constexpr std::array<char, 8> kShotMagic{'F', 'W', 'I', 'G', 'A', 'T', 'H', '1'};

class LeWriter {
public:
    void magic(const std::array<char, 8>& m) { buf_.insert(buf_.end(), m.begin(), m.end()); }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }

    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void flush(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw IoError("write failed for '" + path.string() + "'");
    }

private:
    std::vector<char> buf_;
};

class LeReader {
public:
    explicit LeReader(const std::filesystem::path& path) : path_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open '" + path_ + "' for reading");
        buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    void magic(const std::array<char, 8>& m) {
        need(8, "magic");
        if (std::memcmp(buf_.data(), m.data(), 8) != 0)
            throw IoError("bad magic in '" + path_ + "': expected " + std::string(m.begin(), m.end()));
        pos_ = 8;
    }

    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    std::vector<double> payload(std::uint64_t count) {
        if (count > (buf_.size() - pos_) / 8) throw IoError("truncated payload in '" + path_ + "'");
        std::vector<double> out(count);
        for (auto& v : out) {
            v = f64("payload");
            if (!std::isfinite(v)) throw IoError("non-finite value in '" + path_ + "'");
        }
        return out;
    }

    void expect_end() const {
        if (pos_ != buf_.size()) throw IoError("trailing bytes in '" + path_ + "'");
    }

private:
    void need(std::size_t n, const char* what) const {
        if (buf_.size() - pos_ < n) throw IoError(std::string("truncated file '") + path_ + "' while reading " + what);
    }

    std::string path_;
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

std::size_t checked_size(std::uint64_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw IoError(std::string("implausible ") + what + " in header");
    return static_cast<std::size_t>(v);
}

}  // namespace

void write_grid_file(const Grid2D& grid, const Array2D& values, const std::filesystem::path& path) {
    if (values.rows() != grid.nz() || values.cols() != grid.nx())
        throw ValidationError("write_grid_file: values must be nz x nx");
    if (!values.all_finite()) throw ValidationError("write_grid_file: values must be finite");
    LeWriter w;
    w.magic(kGridMagic);
    w.u64(grid.nx());
    w.u64(grid.nz());
    w.f64(grid.dx());
    w.f64(grid.dz());
    w.f64(grid.x0());
    w.f64(grid.z0());
    for (double v : values.values()) w.f64(v);
    w.flush(path);
}

void write_grid_file(const VelocityModel& model, const std::filesystem::path& path) {
    write_grid_file(model.grid(), model.m(), path);
}

GridData read_grid_data(const std::filesystem::path& path) {
    LeReader r(path);
    r.magic(kGridMagic);
    const std::size_t nx = checked_size(r.u64("nx"), "nx");
    const std::size_t nz = checked_size(r.u64("nz"), "nz");
    const double dx = r.f64("dx");
    const double dz = r.f64("dz");
    const double x0 = r.f64("x0");
    const double z0 = r.f64("z0");
    auto data = r.payload(static_cast<std::uint64_t>(nx) * nz);
    r.expect_end();
    try {
        Grid2D grid(nx, nz, dx, dz, x0, z0);
        return GridData{grid, Array2D(nz, nx, std::move(data))};
    } catch (const ValidationError& e) {
        throw IoError(std::string("invalid grid header in '") + path.string() + "': " + e.what());
    }
}

VelocityModel read_grid_file(const std::filesystem::path& path, VelocityBounds bounds) {
    auto data = read_grid_data(path);
    return VelocityModel(data.grid, std::move(data.values), bounds);
}

void write_shot_file(const ShotRecord& shot, const std::filesystem::path& path) {
    LeWriter w;
    w.magic(kShotMagic);
    w.u64(shot.receivers());
    w.u64(shot.nt());
    w.f64(shot.time().dt());
    w.u64(shot.source_index());
    for (double v : shot.samples().values()) w.f64(v);
    w.flush(path);
}

ShotRecord read_shot_file(const std::filesystem::path& path) {
    LeReader r(path);
    r.magic(kShotMagic);
    const std::size_t receivers = checked_size(r.u64("receiver count"), "receiver count");
    const std::size_t nt = checked_size(r.u64("nt"), "nt");
    const double dt = r.f64("dt");
    const std::size_t source_index = checked_size(r.u64("source index"), "source index");
    auto data = r.payload(static_cast<std::uint64_t>(receivers) * nt);
    r.expect_end();
    try {
        return ShotRecord(TimeAxis(nt, dt), Array2D(receivers, nt, std::move(data)), source_index);
    } catch (const ValidationError& e) {
        throw IoError(std::string("invalid shot header in '") + path.string() + "': " + e.what());
    }
}

std::size_t Table::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IoError("table has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

void write_csv(const Table& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (std::size_t c = 0; c < table.header.size(); ++c) out << (c ? "," : "") << table.header[c];
    out << '\n';
    std::array<char, 32> buf{};
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw IoError("write_csv: row width differs from the header");
        for (std::size_t c = 0; c < row.size(); ++c) {
            const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), row[c]);
            if (c) out << ',';
            out.write(buf.data(), res.ptr - buf.data());
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.header.push_back(cell);
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const std::size_t end = std::min(line.find(',', pos), line.size());
            double v = 0.0;
            const auto res = std::from_chars(line.data() + pos, line.data() + end, v);
            if (res.ec != std::errc() || res.ptr != line.data() + end)
                throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number");
            row.push_back(v);
            pos = end + 1;
        }
        if (row.size() != t.header.size())
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(t.header.size()) + " columns");
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_pgm(const Array2D& values, const std::filesystem::path& path) {
    if (values.empty()) throw ValidationError("write_pgm: empty image");
    double mean = 0.0;
    for (double v : values.values()) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values.values()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(values.size()));
    double lo = mean - 3.0 * sd, hi = mean + 3.0 * sd;
    lo = std::max(lo, *std::min_element(values.values().begin(), values.values().end()));
    hi = std::min(hi, *std::max_element(values.values().begin(), values.values().end()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "P5\n" << values.cols() << ' ' << values.rows() << "\n255\n";
    std::vector<char> bytes(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double u = hi > lo ? (std::clamp(values.values()[k], lo, hi) - lo) / (hi - lo) : 0.5;
        bytes[k] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * u)));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace fwi::io
