#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "doctest.h"
#include "fwi/core.hpp"
#include "fwi/errors.hpp"
#include "fwi/io.hpp"
#include "fwi/rng.hpp"

using namespace fwi;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "fwi_test_core";
    fs::create_directories(dir);
    return dir / name;
}

// FNV-1a over the raw bytes of a file.
std::uint64_t file_hash(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::uint64_t h = 1469598103934665603ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t array_hash(const Array2D& a) {
    std::uint64_t h = 1469598103934665603ULL;
    for (double v : a.values()) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFFu;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("grid rejects bad spacing and sizes") {
    CHECK_THROWS_AS(Grid2D(1, 5, 1.0, 1.0), ValidationError);
    CHECK_THROWS_AS(Grid2D(5, 5, 0.0, 1.0), ValidationError);
    CHECK_THROWS_AS(Grid2D(5, 5, 1.0, -2.0), ValidationError);
    CHECK_THROWS_AS(Grid2D(5, 5, std::nan(""), 1.0), ValidationError);
    CHECK_THROWS_AS(Grid2D(5, 5, 1.0, std::numeric_limits<double>::infinity()), ValidationError);
    const Grid2D g(5, 4, 10.0, 20.0, 100.0, 0.0);
    CHECK(g.x_max() == doctest::Approx(140.0));
    CHECK(g.z_max() == doctest::Approx(60.0));
    CHECK(g.contains({100.0, 60.0}));
    CHECK_FALSE(g.contains({99.0, 0.0}));
}

TEST_CASE("velocity model enforces positivity and bounds") {
    const Grid2D g(3, 2, 1.0, 1.0);
    CHECK_THROWS_AS(VelocityModel(g, Array2D(2, 3, -1.0)), ValidationError);
    CHECK_THROWS_AS(VelocityModel(g, Array2D(2, 3, std::nan(""))), ValidationError);
    CHECK_THROWS_AS(VelocityModel(g, Array2D(3, 2, 1e-6)), ValidationError);
    CHECK_THROWS_AS(VelocityModel::constant_velocity(g, 100.0), ValidationError);
    CHECK_NOTHROW(VelocityModel::constant_velocity(g, 100.0, VelocityBounds{50.0, 200.0}));
    const auto m = VelocityModel::constant_velocity(g, 2000.0);
    CHECK(m.c_max() == doctest::Approx(2000.0));
    CHECK(m.m()(1, 2) == doctest::Approx(2.5e-7));
}

TEST_CASE("time axis and acquisition invariants") {
    CHECK_THROWS_AS(TimeAxis(1, 0.1), ValidationError);
    CHECK_THROWS_AS(TimeAxis(10, 0.0), ValidationError);
    CHECK(TimeAxis(100, 0.01).length() == doctest::Approx(1.0));
    CHECK_THROWS_AS(Acquisition({{0, 0}}, {}, SourceWavelet{}), ValidationError);
    SourceWavelet bad;
    bad.peak_frequency = 0.0;
    CHECK_THROWS_AS(Acquisition({{0, 0}}, {{1, 1}}, bad), ValidationError);
    const Acquisition acq({{0, 0}, {500, 0}}, {{10, 10}}, SourceWavelet{});
    CHECK_THROWS_AS(acq.validate(Grid2D(10, 10, 10.0, 10.0)), ValidationError);
    const std::size_t order[] = {1, 0};
    CHECK(acq.permuted(order).sources()[0].x == 500.0);
}

TEST_CASE("shot record rejects non-finite samples") {
    Array2D s(2, 4);
    s(1, 2) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ShotRecord(TimeAxis(4, 0.1), s), ValidationError);
    CHECK_THROWS_AS(ShotRecord(TimeAxis(5, 0.1), Array2D(2, 4)), ValidationError);
}

TEST_CASE("grid file round trip of a constant model") {
    const Grid2D g(3, 2, 1.0, 1.0);
    const VelocityModel m(g, Array2D(2, 3, 1.0), VelocityBounds{0.5, 2.0});
    const auto p = temp_file("const.grid");
    io::write_grid_file(m, p);
    const auto back = io::read_grid_file(p, VelocityBounds{0.5, 2.0});
    CHECK(back.grid() == g);
    CHECK(back.m() == m.m());
    CHECK(fs::file_size(p) == 8 + 6 * 8 + 6 * 8);
}

TEST_CASE("grid file with bad magic is rejected") {
    const auto p = temp_file("bad.grid");
    write_bytes(p, std::string("XXXXXXXX") + std::string(48, '\0'));
    CHECK_THROWS_AS(io::read_grid_file(p), IoError);
}

TEST_CASE("large random grid file round trip is bit exact") {
    SplitMix64 rng(7);
    const Grid2D g(300, 100, 12.5, 7.25, -3.0, 4.0);
    Array2D c(100, 300);
    for (auto& v : c.values()) v = rng.uniform(1500.0, 4500.0);
    const auto model = VelocityModel::from_velocity(g, c);
    const auto p = temp_file("big.grid");
    io::write_grid_file(model, p);
    const auto h1 = file_hash(p);
    const auto back = io::read_grid_file(p);
    CHECK(array_hash(back.m()) == array_hash(model.m()));
    io::write_grid_file(back, p);
    CHECK(file_hash(p) == h1);
}

TEST_CASE("grid file header is little endian") {
    const Grid2D g(3, 2, 1.0, 1.0);
    const auto p = temp_file("le.grid");
    io::write_grid_file(g, Array2D(2, 3, 0.5), p);
    std::ifstream in(p, std::ios::binary);
    unsigned char bytes[24];
    in.read(reinterpret_cast<char*>(bytes), 24);
    CHECK(std::string(reinterpret_cast<char*>(bytes), 8) == "FWIGRID1");
    CHECK(bytes[8] == 3);
    for (int i = 9; i < 16; ++i) CHECK(bytes[i] == 0);
    CHECK(bytes[16] == 2);
}

TEST_CASE("shot file round trip and truncation") {
    Array2D s(2, 4);
    for (std::size_t i = 0; i < s.size(); ++i) s.values()[i] = 0.25 * static_cast<double>(i) - 1.0;
    const ShotRecord shot(TimeAxis(4, 0.002), s, 3);
    const auto p = temp_file("small.gath");
    io::write_shot_file(shot, p);
    CHECK(io::read_shot_file(p) == shot);

    const auto size = fs::file_size(p);
    fs::resize_file(p, size - 5);
    CHECK_THROWS_AS(io::read_shot_file(p), IoError);
}

TEST_CASE("shot file with trailing bytes or NaN payload is rejected") {
    const ShotRecord shot = ShotRecord::zeros(TimeAxis(3, 0.01), 1);
    const auto p = temp_file("nan.gath");
    io::write_shot_file(shot, p);
    {
        std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(8 + 32);
        const double nan = std::nan("");
        f.write(reinterpret_cast<const char*>(&nan), 8);
    }
    CHECK_THROWS_AS(io::read_shot_file(p), IoError);
    io::write_shot_file(shot, p);
    {
        std::ofstream f(p, std::ios::binary | std::ios::app);
        f.put('x');
    }
    CHECK_THROWS_AS(io::read_shot_file(p), IoError);
}

TEST_CASE("large shot file round trip checksum") {
    SplitMix64 rng(11);
    Array2D s(307, 2000);
    for (auto& v : s.values()) v = rng.normal();
    const ShotRecord shot(TimeAxis(2000, 0.001), s, 5);
    const auto p = temp_file("big.gath");
    io::write_shot_file(shot, p);
    const auto back = io::read_shot_file(p);
    CHECK(array_hash(back.samples()) == array_hash(s));
    CHECK(back.source_index() == 5);
    CHECK(back.time() == shot.time());
}

TEST_CASE("random grid round trips are bitwise identical") {
    SplitMix64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const auto nx = 2 + static_cast<std::size_t>(rng.next() % 30);
        const auto nz = 2 + static_cast<std::size_t>(rng.next() % 30);
        const Grid2D g(nx, nz, rng.uniform(0.1, 50.0), rng.uniform(0.1, 50.0), rng.uniform(-1e3, 1e3),
                       rng.uniform(-1e3, 1e3));
        Array2D v(nz, nx);
        for (auto& x : v.values()) x = rng.uniform(-1e6, 1e6);
        const auto p = temp_file("rand.grid");
        io::write_grid_file(g, v, p);
        const auto back = io::read_grid_data(p);
        CHECK(back.grid == g);
        CHECK(array_hash(back.values) == array_hash(v));
    }
}

TEST_CASE("splitmix is counter based and reproducible") {
    SplitMix64 a(42), b(42);
    for (int i = 0; i < 5; ++i) CHECK(a.next() == b.next());
    CHECK(SplitMix64::at(42, 2) == [] {
        SplitMix64 c(42);
        c.next();
        c.next();
        return c.next();
    }());
    SplitMix64 u(1);
    double mean = 0.0;
    for (int i = 0; i < 10000; ++i) mean += u.uniform();
    CHECK(mean / 10000.0 == doctest::Approx(0.5).epsilon(0.02));
}

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("csv tables round trip bitwise") {
    SplitMix64 rng(7);
    io::Table t{{"a", "b", "c"}, {}};
    for (int r = 0; r < 50; ++r) t.rows.push_back({rng.normal() * 1e-300, rng.uniform(-1e6, 1e6), std::ldexp(rng.uniform(), 900)});
    t.rows.push_back({0.1, -0.0, std::numeric_limits<double>::denorm_min()});
    const auto path = temp_file("t.csv");
    io::write_csv(t, path);
    const auto back = io::read_csv(path);
    CHECK(back.header == t.header);
    REQUIRE(back.rows.size() == t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(std::bit_cast<std::uint64_t>(back.rows[r][c]) == std::bit_cast<std::uint64_t>(t.rows[r][c]));
    CHECK(back.column("b") == 1);
    CHECK_THROWS_AS(back.column("z"), IoError);
    CHECK(slurp(path).substr(0, 6) == "a,b,c\n");
}

TEST_CASE("csv reader reports the offending line") {
    const auto path = temp_file("bad.csv");
    std::ofstream(path) << "x,y\n1,2\n3,oops\n";
    try {
        io::read_csv(path);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    std::ofstream(path) << "x,y\n1,2,3\n";
    CHECK_THROWS_AS(io::read_csv(path), IoError);
    io::Table ragged{{"x"}, {{1.0, 2.0}}};
    CHECK_THROWS_AS(io::write_csv(ragged, path), IoError);
}

TEST_CASE("pgm maps min to black and max to white") {
    Array2D ramp(1, 10);
    for (std::size_t k = 0; k < 10; ++k) ramp(0, k) = static_cast<double>(k);
    const auto path = temp_file("ramp.pgm");
    io::write_pgm(ramp, path);
    const auto bytes = slurp(path);
    const std::string header = "P5\n10 1\n255\n";
    REQUIRE(bytes.size() == header.size() + 10);
    CHECK(bytes.substr(0, header.size()) == header);
    const int expected[10] = {0, 28, 57, 85, 113, 142, 170, 198, 227, 255};
    for (std::size_t k = 0; k < 10; ++k) CHECK(static_cast<unsigned char>(bytes[header.size() + k]) == expected[k]);
}

TEST_CASE("pgm clips outliers at three standard deviations") {
    // mean 11, sd 99.895: the upper clip is 310.68, so 100 maps to 82 and 1000 saturates
    Array2D a(10, 10);
    a(0, 0) = 100.0;
    a(0, 1) = 1000.0;
    const auto path = temp_file("clip.pgm");
    io::write_pgm(a, path);
    const auto bytes = slurp(path);
    const std::size_t off = std::string("P5\n10 10\n255\n").size();
    CHECK(static_cast<unsigned char>(bytes[off]) == 82);
    CHECK(static_cast<unsigned char>(bytes[off + 1]) == 255);
    CHECK(static_cast<unsigned char>(bytes[off + 2]) == 0);

    Array2D flat(2, 3);
    flat.fill(4.0);
    io::write_pgm(flat, path);
    const auto fb = slurp(path);
    CHECK(static_cast<unsigned char>(fb.back()) == 128);
    CHECK_THROWS_AS(io::write_pgm(Array2D{}, path), ValidationError);
}
