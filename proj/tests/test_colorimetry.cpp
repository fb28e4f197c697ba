#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "msfa/colorimetry.hpp"
#include "msfa/core.hpp"
#include "msfa/rng.hpp"

using namespace msfa;

namespace {

std::vector<double> paper_grid() {
    std::vector<double> grid(31);
    for (int b = 0; b < 31; ++b) grid[static_cast<size_t>(b)] = 420.0 + 10.0 * b;
    return grid;
}

} // namespace

TEST_CASE("builtin color table is well-formed") {
    const auto& t = cie1931_d65_10nm();
    REQUIRE(t.wavelengths.size() == 41);
    CHECK(t.wavelengths.front() == 380.0);
    CHECK(t.wavelengths.back() == 780.0);
    for (size_t i = 1; i < t.wavelengths.size(); ++i) CHECK(t.wavelengths[i] > t.wavelengths[i - 1]);
    for (size_t i = 0; i < t.wavelengths.size(); ++i) {
        CHECK(t.xbar[i] >= 0.0);
        CHECK(t.ybar[i] >= 0.0);
        CHECK(t.zbar[i] >= 0.0);
        CHECK(t.illuminant[i] > 0.0);
    }
    CHECK(!t.version.empty());
}

TEST_CASE("shipped data file matches the builtin table") {
    ColorMatchingTable file = load_cmf_csv(std::string(MSFA_SOURCE_DIR) + "/data/cie_1931_2deg_d65_10nm.csv");
    const auto& builtin = cie1931_d65_10nm();
    REQUIRE(file.wavelengths.size() == builtin.wavelengths.size());
    for (size_t i = 0; i < file.wavelengths.size(); ++i) {
        CHECK(file.wavelengths[i] == builtin.wavelengths[i]);
        CHECK(file.xbar[i] == doctest::Approx(builtin.xbar[i]).epsilon(1e-12));
        CHECK(file.ybar[i] == doctest::Approx(builtin.ybar[i]).epsilon(1e-12));
        CHECK(file.zbar[i] == doctest::Approx(builtin.zbar[i]).epsilon(1e-12));
        CHECK(file.illuminant[i] == doctest::Approx(builtin.illuminant[i]).epsilon(1e-12));
    }
}

TEST_CASE("unit transmittance renders to the white point") {
    SpectralRenderer renderer(cie1931_d65_10nm(), paper_grid());
    std::vector<double> unit(31, 1.0);
    auto lin = renderer.linear_rgb(unit);
    for (double v : lin) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
    auto srgb = renderer.srgb(unit);
    for (double v : srgb) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));

    SpectralCube cube = make_cube(2, 3, 31, paper_grid(), 1.0);
    RgbImage img = cube_to_srgb(cube, cie1931_d65_10nm());
    for (double v : img.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("zero transmittance renders to black") {
    SpectralCube cube = make_cube(2, 2, 31, paper_grid(), 0.0);
    RgbImage img = cube_to_srgb(cube, cie1931_d65_10nm());
    for (double v : img.data) CHECK(v == 0.0);
}

TEST_CASE("a narrow 550 nm spectrum is predominantly green") {
    SpectralCube cube = make_cube(1, 1, 31, paper_grid(), 0.0);
    cube.at(0, 0, 13) = 1.0; // 420 + 13*10 = 550 nm
    RgbImage img = cube_to_srgb(cube, cie1931_d65_10nm());
    double r = img.at(0, 0, 0), g = img.at(0, 0, 1), b = img.at(0, 0, 2);
    CHECK(g > r);
    CHECK(g > b);
}

TEST_CASE("renderer rejects wavelengths outside the table") {
    std::vector<double> grid{300.0, 500.0};
    CHECK_THROWS_AS(SpectralRenderer(cie1931_d65_10nm(), grid), validation_error);
    std::vector<double> grid2{500.0, 800.0};
    CHECK_THROWS_AS(SpectralRenderer(cie1931_d65_10nm(), grid2), validation_error);
}

TEST_CASE("psnr closed forms") {
    SpectralCube ref = make_cube(4, 4, 2, {500, 600}, 1.0);
    SpectralCube est = make_cube(4, 4, 2, {500, 600}, 0.5);
    CHECK(psnr_msi(ref, est) == doctest::Approx(6.0206).epsilon(1e-4));
    CHECK(std::isinf(psnr_msi(ref, ref)));

    RgbImage a;
    a.height = 2;
    a.width = 2;
    a.data.assign(12, 0.5);
    RgbImage b = a;
    for (int p = 0; p < 4; ++p) b.data[static_cast<size_t>(p) * 3] += 0.1; // one channel off by 0.1
    CHECK(psnr_rgb(a, b) == doctest::Approx(24.7712).epsilon(1e-4));
    CHECK(std::isinf(psnr_rgb(a, a)));
}

TEST_CASE("scaling the error field by a shifts psnr by exactly -20 log10(a)") {
    std::mt19937_64 rng(5);
    SpectralCube ref = make_cube(6, 6, 3, {500, 550, 600});
    for (double& v : ref.data) v = uniform01(rng);
    SpectralCube e1 = ref, e2 = ref;
    for (size_t i = 0; i < ref.data.size(); ++i) {
        double err = 0.01 * (uniform01(rng) - 0.5);
        e1.data[i] += err;
        e2.data[i] += 3.0 * err;
    }
    double p1 = psnr_msi(ref, e1);
    double p2 = psnr_msi(ref, e2);
    CHECK(p1 - p2 == doctest::Approx(20.0 * std::log10(3.0)).epsilon(1e-9));
}

TEST_CASE("psnr rejects shape mismatches") {
    SpectralCube a = make_cube(2, 2, 2, {500, 600});
    SpectralCube b = make_cube(2, 2, 3, {500, 550, 600});
    CHECK_THROWS_AS(psnr_msi(a, b), validation_error);
    RgbImage x;
    x.height = 2;
    x.width = 2;
    x.data.assign(12, 0.0);
    RgbImage y;
    y.height = 2;
    y.width = 3;
    y.data.assign(18, 0.0);
    CHECK_THROWS_AS(psnr_rgb(x, y), validation_error);
}

TEST_CASE("average spectrum basics and linearity") {
    SpectralCube c = make_cube(2, 1, 3, {500, 550, 600});
    c.at(0, 0, 0) = 0.2;
    c.at(0, 0, 1) = 0.4;
    c.at(0, 0, 2) = 0.6;
    c.at(1, 0, 0) = 0.4;
    c.at(1, 0, 1) = 0.8;
    c.at(1, 0, 2) = 0.2;
    auto avg = average_spectrum(c);
    CHECK(avg[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(avg[1] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(avg[2] == doctest::Approx(0.4).epsilon(1e-15));

    SpectralCube constant = make_cube(3, 5, 2, {500, 600}, 0.125);
    auto cavg = average_spectrum(constant);
    CHECK(cavg[0] == 0.125);
    CHECK(cavg[1] == 0.125);

    // Commutes with band-wise linear maps.
    std::mt19937_64 rng(7);
    SpectralCube big = make_cube(4, 4, 3, {500, 550, 600});
    for (double& v : big.data) v = uniform01(rng);
    double scale_per_band[3] = {0.5, 2.0, -1.0};
    SpectralCube mapped = big;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int b = 0; b < 3; ++b) mapped.at(y, x, b) = scale_per_band[b] * big.at(y, x, b);
    auto avg_big = average_spectrum(big);
    auto avg_mapped = average_spectrum(mapped);
    for (int b = 0; b < 3; ++b)
        CHECK(avg_mapped[static_cast<size_t>(b)] ==
              doctest::Approx(scale_per_band[b] * avg_big[static_cast<size_t>(b)]).epsilon(1e-12));

    // Mean of per-block means equals the global mean for uniform blocks.
    double block_mean_sum = 0.0;
    for (int by = 0; by < 2; ++by)
        for (int bx = 0; bx < 2; ++bx) {
            double m = 0.0;
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x) m += big.at(by * 2 + y, bx * 2 + x, 1);
            block_mean_sum += m / 4.0;
        }
    CHECK(block_mean_sum / 4.0 == doctest::Approx(avg_big[1]).epsilon(1e-12));
}

TEST_CASE("patch colors share the cube conversion path bit for bit") {
    std::mt19937_64 rng(11);
    MsfaBlock m;
    m.geometry = {2, 2};
    m.bands = 31;
    m.sensitivities = Matrix(4, 31);
    for (double& v : m.sensitivities.data()) v = uniform01(rng);

    auto colors = msfa_patch_colors(m, paper_grid(), cie1931_d65_10nm());
    REQUIRE(colors.size() == 4);

    for (int row = 0; row < 4; ++row) {
        SpectralCube one = make_cube(1, 1, 31, paper_grid());
        for (int b = 0; b < 31; ++b) one.at(0, 0, b) = m.sensitivities(row, b);
        RgbImage img = cube_to_srgb(one, cie1931_d65_10nm());
        for (int c = 0; c < 3; ++c) CHECK(colors[static_cast<size_t>(row)][static_cast<size_t>(c)] == img.at(0, 0, c));
    }

    // All-ones row is white, all-zeros row is black.
    MsfaBlock mono;
    mono.geometry = {2, 1};
    mono.bands = 31;
    mono.sensitivities = Matrix(2, 31);
    for (int b = 0; b < 31; ++b) mono.sensitivities(0, b) = 1.0;
    auto extremes = msfa_patch_colors(mono, paper_grid(), cie1931_d65_10nm());
    for (int c = 0; c < 3; ++c) {
        CHECK(extremes[0][static_cast<size_t>(c)] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(extremes[1][static_cast<size_t>(c)] == 0.0);
    }
}

TEST_CASE("ppm writer emits the exact binary layout") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "msfa_ppm_test";
    fs::create_directories(dir);
    RgbImage img;
    img.height = 1;
    img.width = 2;
    img.data = {1.0, 0.0, 0.5, 0.0, 1.0, 0.25};
    std::string path = (dir / "t.ppm").string();
    write_ppm(img, path);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    REQUIRE(bytes.size() == 11 + 6);
    CHECK(bytes.substr(0, 11) == "P6\n2 1\n255\n");
    CHECK(static_cast<unsigned char>(bytes[11]) == 255);
    CHECK(static_cast<unsigned char>(bytes[12]) == 0);
    CHECK(static_cast<unsigned char>(bytes[13]) == 128);
    CHECK(static_cast<unsigned char>(bytes[14]) == 0);
    CHECK(static_cast<unsigned char>(bytes[15]) == 255);
    CHECK(static_cast<unsigned char>(bytes[16]) == 64);
    fs::remove_all(dir);
}

TEST_CASE("csv exports carry the wavelength column first") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "msfa_csv_test";
    fs::create_directories(dir);

    MsfaBlock m;
    m.geometry = {1, 2};
    m.bands = 3;
    m.sensitivities = Matrix(2, 3);
    for (int i = 0; i < 6; ++i) m.sensitivities.data()[static_cast<size_t>(i)] = i * 0.1;
    std::vector<double> grid{500, 550, 600};
    std::string sens_path = (dir / "s.csv").string();
    write_sensitivity_csv(m, grid, sens_path);
    std::ifstream sens(sens_path);
    std::string line;
    std::getline(sens, line);
    CHECK(line == "band_nm,filter_1,filter_2");
    std::getline(sens, line);
    CHECK(line.substr(0, 4) == "500,");

    std::vector<double> ref_avg{0.1, 0.2, 0.3};
    std::vector<double> est_avg{0.15, 0.25, 0.35};
    std::string avg_path = (dir / "a.csv").string();
    write_average_spectrum_csv(grid, ref_avg, est_avg, avg_path);
    std::ifstream avg(avg_path);
    std::getline(avg, line);
    CHECK(line == "band_nm,reference,estimate");
    std::getline(avg, line);
    CHECK(line == "500,0.10000000000000001,0.14999999999999999");
    fs::remove_all(dir);
}
