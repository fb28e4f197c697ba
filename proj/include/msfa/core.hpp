#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "msfa/errors.hpp"
#include "msfa/linalg.hpp"

namespace msfa {

// 2-D footprint of one filter-array block. M = rows * cols pixels.
struct BlockGeometry {
    int rows = 4;
    int cols = 4;

    int pixels() const { return rows * cols; }
    bool operator==(const BlockGeometry&) const = default;
};

// H x W x L image of transmittance values. Samples are stored pixel-major
// (the whole spectrum of a pixel is contiguous); files store band-sequential
// and the I/O layer converts. `scale` is the payload divisor the file format
// carries; it is kept so a cube can be written back bit-exactly.
struct SpectralCube {
    int height = 0;
    int width = 0;
    int bands = 0;
    std::vector<double> wavelengths;
    std::vector<double> data;
    double scale = 1.0;

    double& at(int y, int x, int b) { return data[(static_cast<size_t>(y) * width + x) * bands + b]; }
    double at(int y, int x, int b) const { return data[(static_cast<size_t>(y) * width + x) * bands + b]; }

    std::span<const double> spectrum(int y, int x) const {
        return {data.data() + (static_cast<size_t>(y) * width + x) * bands, static_cast<size_t>(bands)};
    }
    std::span<double> spectrum(int y, int x) {
        return {data.data() + (static_cast<size_t>(y) * width + x) * bands, static_cast<size_t>(bands)};
    }

    size_t sample_count() const { return static_cast<size_t>(height) * width * bands; }
};

inline SpectralCube make_cube(int height, int width, int bands, std::vector<double> wavelengths,
                              double fill = 0.0) {
    SpectralCube c;
    c.height = height;
    c.width = width;
    c.bands = bands;
    c.wavelengths = std::move(wavelengths);
    c.data.assign(static_cast<size_t>(height) * width * bands, fill);
    return c;
}

// Shape-level invariants. Holds for every cube in the system, including
// unclamped reconstruction estimates.
inline void validate_cube_shape(const SpectralCube& c) {
    if (c.height < 1 || c.width < 1 || c.bands < 1)
        throw validation_error("cube: dimensions must be positive");
    if (static_cast<int>(c.wavelengths.size()) != c.bands)
        throw validation_error("cube: wavelength count " + std::to_string(c.wavelengths.size()) +
                               " does not match band count " + std::to_string(c.bands));
    for (size_t i = 1; i < c.wavelengths.size(); ++i)
        if (!(c.wavelengths[i] > c.wavelengths[i - 1]))
            throw validation_error("cube: wavelengths must be strictly increasing");
    if (c.data.size() != c.sample_count())
        throw validation_error("cube: sample count " + std::to_string(c.data.size()) +
                               " does not match header dimensions " + std::to_string(c.sample_count()));
    if (!(c.scale > 0.0) || !std::isfinite(c.scale))
        throw validation_error("cube: scale must be positive and finite");
}

// Range invariant enforced on load (reconstruction estimates may leave it).
inline void validate_cube_range(const SpectralCube& c) {
    for (double v : c.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw validation_error("cube: sample " + std::to_string(v) +
                                   " outside [0, 1] after applying scale");
}

// One filter-array block: row m holds the spectral sensitivity of the filter
// at block position m (row-major over the block's pixels).
struct MsfaBlock {
    BlockGeometry geometry;
    int bands = 0;
    Matrix sensitivities; // M x L
};

inline void validate_msfa(const MsfaBlock& m) {
    if (m.geometry.rows < 1 || m.geometry.cols < 1)
        throw validation_error("msfa: block geometry must be positive");
    if (m.bands < 1) throw validation_error("msfa: band count must be positive");
    if (m.sensitivities.rows() != m.geometry.pixels() || m.sensitivities.cols() != m.bands)
        throw validation_error("msfa: sensitivity matrix shape does not match geometry/bands");
    for (double v : m.sensitivities.data())
        if (!(v >= 0.0 && v <= 1.0))
            throw validation_error("msfa: sensitivity " + std::to_string(v) + " outside [0, 1]");
}

// Single-channel measurement image plus the provenance needed to undo the
// file normalization and to rebuild a cube after demosaicking.
struct MosaickedImage {
    int height = 0;
    int width = 0;
    std::vector<double> data; // true measurements, in [0, L] for a noiseless chain
    BlockGeometry geometry;
    double source_scale = 1.0;
    int source_bands = 0;
    std::vector<double> source_wavelengths;

    double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

// Checks that the block grid tiles the image exactly, anchored at (0,0).
// Images that are not a whole number of blocks are rejected, not padded.
inline void require_tiling(int height, int width, const BlockGeometry& g, const char* what) {
    if (g.rows < 1 || g.cols < 1) throw validation_error(std::string(what) + ": block geometry must be positive");
    if (height % g.rows != 0 || width % g.cols != 0)
        throw validation_error(std::string(what) + ": image " + std::to_string(height) + "x" +
                               std::to_string(width) + " is not a multiple of the " +
                               std::to_string(g.rows) + "x" + std::to_string(g.cols) + " block");
    if (height / g.rows < 1 || width / g.cols < 1)
        throw validation_error(std::string(what) + ": image holds no complete block");
}

// Stacks one block into a length L*M vector: pixels row-major within the
// block, each pixel's spectrum contiguous.
inline std::vector<double> vectorize_block(const SpectralCube& cube, int block_row, int block_col,
                                           const BlockGeometry& g) {
    require_tiling(cube.height, cube.width, g, "vectorize_block");
    const int blocks_down = cube.height / g.rows;
    const int blocks_across = cube.width / g.cols;
    if (block_row < 0 || block_row >= blocks_down || block_col < 0 || block_col >= blocks_across)
        throw validation_error("vectorize_block: block index (" + std::to_string(block_row) + ", " +
                               std::to_string(block_col) + ") outside " + std::to_string(blocks_down) +
                               "x" + std::to_string(blocks_across) + " tiling");
    std::vector<double> out(static_cast<size_t>(g.pixels()) * cube.bands);
    size_t at = 0;
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            auto s = cube.spectrum(block_row * g.rows + r, block_col * g.cols + c);
            for (int b = 0; b < cube.bands; ++b) out[at++] = s[static_cast<size_t>(b)];
        }
    }
    return out;
}

// Inverse of vectorize_block: writes a length L*M vector back into the block.
inline void devectorize_block(std::span<const double> v, SpectralCube& cube, int block_row,
                              int block_col, const BlockGeometry& g) {
    if (v.size() != static_cast<size_t>(g.pixels()) * cube.bands)
        throw validation_error("devectorize_block: vector length does not match L*M");
    size_t at = 0;
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            auto s = cube.spectrum(block_row * g.rows + r, block_col * g.cols + c);
            for (int b = 0; b < cube.bands; ++b) s[static_cast<size_t>(b)] = v[at++];
        }
    }
}

} // namespace msfa
