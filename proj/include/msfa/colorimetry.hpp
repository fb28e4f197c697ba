#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "msfa/core.hpp"
#include "msfa/io.hpp"
#include "msfa/parallel.hpp"

namespace msfa {

// CIE 1931 2-degree observer plus illuminant spectral power on a shared
// wavelength grid.
struct ColorMatchingTable {
    std::vector<double> wavelengths;
    std::vector<double> xbar, ybar, zbar;
    std::vector<double> illuminant;
    std::string version;
};

// Built-in table: CIE 1931 2-deg color matching functions (abridged) and the
// D65 relative spectral power distribution, 380-780 nm at 10 nm.
inline const ColorMatchingTable& cie1931_d65_10nm() {
    static const ColorMatchingTable table = [] {
        // clang-format off
        static constexpr double rows[][5] = {
            // nm     xbar    ybar    zbar    D65
            {380.0, 0.0014, 0.0000, 0.0065,  49.9755},
            {390.0, 0.0042, 0.0001, 0.0201,  54.6482},
            {400.0, 0.0143, 0.0004, 0.0679,  82.7549},
            {410.0, 0.0435, 0.0012, 0.2074,  91.4860},
            {420.0, 0.1344, 0.0040, 0.6456,  93.4318},
            {430.0, 0.2839, 0.0116, 1.3856,  86.6823},
            {440.0, 0.3483, 0.0230, 1.7471, 104.8650},
            {450.0, 0.3362, 0.0380, 1.7721, 117.0080},
            {460.0, 0.2908, 0.0600, 1.6692, 117.8120},
            {470.0, 0.1954, 0.0910, 1.2876, 114.8610},
            {480.0, 0.0956, 0.1390, 0.8130, 115.9230},
            {490.0, 0.0320, 0.2080, 0.4652, 108.8110},
            {500.0, 0.0049, 0.3230, 0.2720, 109.3540},
            {510.0, 0.0093, 0.5030, 0.1582, 107.8020},
            {520.0, 0.0633, 0.7100, 0.0782, 104.7900},
            {530.0, 0.1655, 0.8620, 0.0422, 107.6890},
            {540.0, 0.2904, 0.9540, 0.0203, 104.4050},
            {550.0, 0.4334, 0.9950, 0.0087, 104.0460},
            {560.0, 0.5945, 0.9950, 0.0039, 100.0000},
            {570.0, 0.7621, 0.9520, 0.0021,  96.3342},
            {580.0, 0.9163, 0.8700, 0.0017,  95.7880},
            {590.0, 1.0263, 0.7570, 0.0011,  88.6856},
            {600.0, 1.0622, 0.6310, 0.0008,  90.0062},
            {610.0, 1.0026, 0.5030, 0.0003,  89.5991},
            {620.0, 0.8544, 0.3810, 0.0002,  87.6987},
            {630.0, 0.6424, 0.2650, 0.0000,  83.2886},
            {640.0, 0.4479, 0.1750, 0.0000,  83.6992},
            {650.0, 0.2835, 0.1070, 0.0000,  80.0268},
            {660.0, 0.1649, 0.0610, 0.0000,  80.2146},
            {670.0, 0.0874, 0.0320, 0.0000,  82.2778},
            {680.0, 0.0468, 0.0170, 0.0000,  78.2842},
            {690.0, 0.0227, 0.0082, 0.0000,  69.7213},
            {700.0, 0.0114, 0.0041, 0.0000,  71.6091},
            {710.0, 0.0058, 0.0021, 0.0000,  74.3490},
            {720.0, 0.0029, 0.0010, 0.0000,  61.6040},
            {730.0, 0.0014, 0.0005, 0.0000,  69.8856},
            {740.0, 0.0007, 0.0002, 0.0000,  75.0870},
            {750.0, 0.0003, 0.0001, 0.0000,  63.5927},
            {760.0, 0.0002, 0.0001, 0.0000,  46.4182},
            {770.0, 0.0001, 0.0000, 0.0000,  66.8054},
            {780.0, 0.0000, 0.0000, 0.0000,  63.3828},
        };
        // clang-format on
        ColorMatchingTable t;
        t.version = "cie1931-2deg-d65-10nm-v1";
        for (const auto& r : rows) {
            t.wavelengths.push_back(r[0]);
            t.xbar.push_back(r[1]);
            t.ybar.push_back(r[2]);
            t.zbar.push_back(r[3]);
            t.illuminant.push_back(r[4]);
        }
        return t;
    }();
    return table;
}

// Optional external table, same five columns as the shipped data file.
inline ColorMatchingTable load_cmf_csv(const std::string& path) {
    Matrix m = load_spectra_csv(path);
    if (m.cols() != 5) throw validation_error(path + ": expected 5 columns (nm, xbar, ybar, zbar, illuminant)");
    ColorMatchingTable t;
    t.version = path;
    for (int i = 0; i < m.rows(); ++i) {
        if (i > 0 && !(m(i, 0) > m(i - 1, 0)))
            throw validation_error(path + ": wavelengths must be strictly increasing");
        if (m(i, 1) < 0.0 || m(i, 2) < 0.0 || m(i, 3) < 0.0 || m(i, 4) < 0.0)
            throw validation_error(path + ": negative table entry");
        t.wavelengths.push_back(m(i, 0));
        t.xbar.push_back(m(i, 1));
        t.ybar.push_back(m(i, 2));
        t.zbar.push_back(m(i, 3));
        t.illuminant.push_back(m(i, 4));
    }
    return t;
}

// Gamma-encoded sRGB image, values clamped to [0, 1].
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<double> data; // H x W x 3

    double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
};

inline double srgb_encode(double linear) {
    // Linear segment also covers negative inputs; the caller clamps after.
    if (linear <= 0.0031308) return 12.92 * linear;
    return 1.055 * std::pow(linear, 1.0 / 2.4) - 0.055;
}

namespace detail {

inline double interp_table(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    size_t hi = 1;
    while (hi < xs.size() && xs[hi] < x) ++hi;
    if (hi == xs.size()) return ys.back();
    double x0 = xs[hi - 1], x1 = xs[hi];
    double w = x1 == x0 ? 0.0 : (x - x0) / (x1 - x0);
    return ys[hi - 1] * (1.0 - w) + ys[hi] * w;
}

} // namespace detail

// Precomputed spectrum -> sRGB pipeline for one wavelength grid:
//   XYZ  = sum_b t_b * S(l_b) * cmf(l_b) * dl_b, scaled so unit transmittance
//          hits the illuminant white point with Y = 1;
//   rgb  = M_srgb * XYZ, divided per channel by the rendered white so a unit
//          spectrum is exactly (1, 1, 1) before gamma;
//   sRGB = gamma-encode, clamp to [0, 1].
class SpectralRenderer {
public:
    SpectralRenderer(const ColorMatchingTable& cmf, std::span<const double> grid) {
        const int l = static_cast<int>(grid.size());
        if (l < 1) throw validation_error("renderer: empty wavelength grid");
        if (grid.front() < cmf.wavelengths.front() || grid.back() > cmf.wavelengths.back())
            throw validation_error("renderer: cube wavelengths " + format_double(grid.front()) + ".." +
                                   format_double(grid.back()) + " nm exceed the color table range " +
                                   format_double(cmf.wavelengths.front()) + ".." +
                                   format_double(cmf.wavelengths.back()) + " nm");
        wx_.resize(static_cast<size_t>(l));
        wy_.resize(static_cast<size_t>(l));
        wz_.resize(static_cast<size_t>(l));
        double ynorm = 0.0;
        for (int b = 0; b < l; ++b) {
            double lam = grid[static_cast<size_t>(b)];
            double dl;
            if (l == 1)
                dl = 1.0;
            else if (b == 0)
                dl = 0.5 * (grid[1] - grid[0]);
            else if (b == l - 1)
                dl = 0.5 * (grid[static_cast<size_t>(l - 1)] - grid[static_cast<size_t>(l - 2)]);
            else
                dl = 0.5 * (grid[static_cast<size_t>(b + 1)] - grid[static_cast<size_t>(b - 1)]);
            double s = detail::interp_table(cmf.wavelengths, cmf.illuminant, lam) * dl;
            wx_[static_cast<size_t>(b)] = s * detail::interp_table(cmf.wavelengths, cmf.xbar, lam);
            wy_[static_cast<size_t>(b)] = s * detail::interp_table(cmf.wavelengths, cmf.ybar, lam);
            wz_[static_cast<size_t>(b)] = s * detail::interp_table(cmf.wavelengths, cmf.zbar, lam);
            ynorm += wy_[static_cast<size_t>(b)];
        }
        if (!(ynorm > 0.0)) throw validation_error("renderer: illuminant-weighted luminance is zero on this grid");
        for (int b = 0; b < l; ++b) {
            wx_[static_cast<size_t>(b)] /= ynorm;
            wy_[static_cast<size_t>(b)] /= ynorm;
            wz_[static_cast<size_t>(b)] /= ynorm;
        }
        double xw = 0.0, yw = 0.0, zw = 0.0;
        for (int b = 0; b < l; ++b) {
            xw += wx_[static_cast<size_t>(b)];
            yw += wy_[static_cast<size_t>(b)];
            zw += wz_[static_cast<size_t>(b)];
        }
        white_ = xyz_to_linear_rgb(xw, yw, zw);
        for (double w : white_)
            if (!(w > 0.0)) throw validation_error("renderer: white point maps outside the sRGB gamut");
    }

    // White-balanced linear sRGB, unclamped.
    std::array<double, 3> linear_rgb(std::span<const double> spectrum) const {
        double x = 0.0, y = 0.0, z = 0.0;
        for (size_t b = 0; b < spectrum.size(); ++b) {
            x += spectrum[b] * wx_[b];
            y += spectrum[b] * wy_[b];
            z += spectrum[b] * wz_[b];
        }
        std::array<double, 3> rgb = xyz_to_linear_rgb(x, y, z);
        for (int c = 0; c < 3; ++c) rgb[static_cast<size_t>(c)] /= white_[static_cast<size_t>(c)];
        return rgb;
    }

    std::array<double, 3> srgb(std::span<const double> spectrum) const {
        std::array<double, 3> rgb = linear_rgb(spectrum);
        for (double& v : rgb) {
            v = srgb_encode(v);
            if (v < 0.0) v = 0.0;
            if (v > 1.0) v = 1.0;
        }
        return rgb;
    }

    static std::array<double, 3> xyz_to_linear_rgb(double x, double y, double z) {
        return {3.2406 * x - 1.5372 * y - 0.4986 * z, -0.9689 * x + 1.8758 * y + 0.0415 * z,
                0.0557 * x - 0.2040 * y + 1.0570 * z};
    }

private:
    std::vector<double> wx_, wy_, wz_;
    std::array<double, 3> white_{};
};

inline RgbImage cube_to_srgb(const SpectralCube& cube, const ColorMatchingTable& cmf) {
    validate_cube_shape(cube);
    SpectralRenderer renderer(cmf, cube.wavelengths);
    RgbImage img;
    img.height = cube.height;
    img.width = cube.width;
    img.data.assign(static_cast<size_t>(cube.height) * cube.width * 3, 0.0);
    parallel_for(cube.height, [&](long y) {
        for (int x = 0; x < cube.width; ++x) {
            auto rgb = renderer.srgb(cube.spectrum(static_cast<int>(y), x));
            for (int c = 0; c < 3; ++c) img.at(static_cast<int>(y), x, c) = rgb[static_cast<size_t>(c)];
        }
    });
    return img;
}

// Each sensitivity row rendered as if it were a transmittance spectrum, via
// the same per-pixel path as cube_to_srgb.
inline std::vector<std::array<double, 3>> msfa_patch_colors(const MsfaBlock& msfa,
                                                            std::span<const double> wavelengths,
                                                            const ColorMatchingTable& cmf) {
    if (static_cast<int>(wavelengths.size()) != msfa.bands)
        throw validation_error("msfa_patch_colors: wavelength grid does not match the filter band count");
    SpectralRenderer renderer(cmf, wavelengths);
    std::vector<std::array<double, 3>> out;
    out.reserve(static_cast<size_t>(msfa.geometry.pixels()));
    for (int m = 0; m < msfa.geometry.pixels(); ++m) out.push_back(renderer.srgb(msfa.sensitivities.row(m)));
    return out;
}

// PSNR with peak 1.0 over every sample; identical inputs report +infinity.
inline double psnr_msi(const SpectralCube& reference, const SpectralCube& estimate) {
    if (reference.height != estimate.height || reference.width != estimate.width ||
        reference.bands != estimate.bands)
        throw validation_error("psnr_msi: cube shapes disagree");
    const long n = static_cast<long>(reference.data.size());
    double mse = deterministic_sum(n, [&](long i) {
                     double d = reference.data[static_cast<size_t>(i)] - estimate.data[static_cast<size_t>(i)];
                     return d * d;
                 }) /
                 static_cast<double>(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

inline double psnr_rgb(const RgbImage& reference, const RgbImage& estimate) {
    if (reference.height != estimate.height || reference.width != estimate.width)
        throw validation_error("psnr_rgb: image shapes disagree");
    const long n = static_cast<long>(reference.data.size());
    double mse = deterministic_sum(n, [&](long i) {
                     double d = reference.data[static_cast<size_t>(i)] - estimate.data[static_cast<size_t>(i)];
                     return d * d;
                 }) /
                 static_cast<double>(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

// Per-band mean over all pixels.
inline std::vector<double> average_spectrum(const SpectralCube& cube) {
    validate_cube_shape(cube);
    std::vector<double> sums(static_cast<size_t>(cube.bands), 0.0);
    const long n = static_cast<long>(cube.height) * cube.width;
    for (long p = 0; p < n; ++p) {
        const double* s = cube.data.data() + static_cast<size_t>(p) * cube.bands;
        for (int b = 0; b < cube.bands; ++b) sums[static_cast<size_t>(b)] += s[b];
    }
    for (double& v : sums) v /= static_cast<double>(n);
    return sums;
}

// Binary PPM (P6, 8-bit) for bit-exact diffing of rendered images.
inline void write_ppm(const RgbImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open image for writing: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> bytes;
    bytes.reserve(img.data.size());
    for (double v : img.data) {
        double q = v * 255.0 + 0.5;
        if (q < 0.0) q = 0.0;
        if (q > 255.0) q = 255.0;
        bytes.push_back(static_cast<unsigned char>(q));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error("failed writing image: " + path);
}

// One row per patch of the block, rendered as solid squares.
inline RgbImage patch_grid_image(const std::vector<std::array<double, 3>>& colors, const BlockGeometry& g,
                                 int patch_px = 32) {
    RgbImage img;
    img.height = g.rows * patch_px;
    img.width = g.cols * patch_px;
    img.data.assign(static_cast<size_t>(img.height) * img.width * 3, 0.0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const auto& c = colors[static_cast<size_t>(y / patch_px * g.cols + x / patch_px)];
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[static_cast<size_t>(ch)];
        }
    return img;
}

// CSV with one row per band: wavelength then each filter's sensitivity.
inline void write_sensitivity_csv(const MsfaBlock& msfa, std::span<const double> wavelengths,
                                  const std::string& path) {
    if (static_cast<int>(wavelengths.size()) != msfa.bands)
        throw validation_error("sensitivity csv: wavelength grid does not match the filter band count");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open csv for writing: " + path);
    out << "band_nm";
    for (int m = 1; m <= msfa.geometry.pixels(); ++m) out << ",filter_" << m;
    out << "\n";
    for (int b = 0; b < msfa.bands; ++b) {
        out << format_double(wavelengths[static_cast<size_t>(b)]);
        for (int m = 0; m < msfa.geometry.pixels(); ++m) out << "," << format_double(msfa.sensitivities(m, b));
        out << "\n";
    }
    if (!out) throw io_error("failed writing csv: " + path);
}

inline void write_average_spectrum_csv(std::span<const double> wavelengths, std::span<const double> reference,
                                       std::span<const double> estimate, const std::string& path) {
    if (wavelengths.size() != reference.size() || wavelengths.size() != estimate.size())
        throw validation_error("average spectrum csv: column lengths disagree");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open csv for writing: " + path);
    out << "band_nm,reference,estimate\n";
    for (size_t b = 0; b < wavelengths.size(); ++b)
        out << format_double(wavelengths[b]) << "," << format_double(reference[b]) << ","
            << format_double(estimate[b]) << "\n";
    if (!out) throw io_error("failed writing csv: " + path);
}

} // namespace msfa
