#pragma once

#include <cstdint>

#include "msfa/core.hpp"
#include "msfa/rng.hpp"

namespace msfa {

// Test-data generator: every pixel spectrum is a nonnegative mixture of
// `rank` random basis spectra, so the spectral autocorrelation has rank r
// before noise. Mixture weights vary smoothly across the image (bilinear
// upsampling of a coarse random grid), mimicking the spatial correlation the
// blockwise measurement model relies on. Values land in [0, 1] without
// clipping; optional white Gaussian noise is added per sample and clipped.
// Samples are rounded through float32 so a saved file reloads bit-exactly.
inline SpectralCube synth_cube(int height, int width, int bands, int rank, uint64_t seed,
                               double noise_sigma = 0.0) {
    if (height < 1 || width < 1 || bands < 1) throw validation_error("synth: dimensions must be positive");
    if (rank < 1 || rank > bands)
        throw validation_error("synth: rank must lie in [1, bands], got " + std::to_string(rank));
    if (noise_sigma < 0.0) throw validation_error("synth: noise sigma must be nonnegative");

    std::vector<double> wavelengths(static_cast<size_t>(bands));
    if (bands == 1)
        wavelengths[0] = 550.0;
    else
        for (int b = 0; b < bands; ++b)
            wavelengths[static_cast<size_t>(b)] = 420.0 + 300.0 * b / (bands - 1);

    SpectralCube cube = make_cube(height, width, bands, std::move(wavelengths));

    std::mt19937_64 rng(seed);
    GaussianSampler gauss(rng);
    Matrix basis(rank, bands);
    for (double& v : basis.data()) v = uniform01(rng);

    // Coarse weight grids, one per basis vector, upsampled bilinearly.
    const int cell = 8;
    const int grid_h = (height + cell - 1) / cell + 1;
    const int grid_w = (width + cell - 1) / cell + 1;
    std::vector<Matrix> grids;
    grids.reserve(static_cast<size_t>(rank));
    for (int j = 0; j < rank; ++j) {
        Matrix g(grid_h, grid_w);
        for (double& v : g.data()) v = uniform01(rng);
        grids.push_back(std::move(g));
    }
    auto weight_at = [&](int j, int y, int x) {
        int gy = y / cell, gx = x / cell;
        double fy = static_cast<double>(y - gy * cell) / cell;
        double fx = static_cast<double>(x - gx * cell) / cell;
        const Matrix& g = grids[static_cast<size_t>(j)];
        return g(gy, gx) * (1.0 - fy) * (1.0 - fx) + g(gy, gx + 1) * (1.0 - fy) * fx +
               g(gy + 1, gx) * fy * (1.0 - fx) + g(gy + 1, gx + 1) * fy * fx;
    };

    std::vector<double> weights(static_cast<size_t>(rank));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int j = 0; j < rank; ++j) weights[static_cast<size_t>(j)] = weight_at(j, y, x);
            double* s = cube.data.data() + (static_cast<size_t>(y) * width + x) * bands;
            for (int b = 0; b < bands; ++b) {
                double v = 0.0;
                for (int j = 0; j < rank; ++j) v += weights[static_cast<size_t>(j)] * basis(j, b);
                v /= static_cast<double>(rank);
                if (noise_sigma > 0.0) {
                    v += noise_sigma * gauss();
                    if (v < 0.0) v = 0.0;
                    if (v > 1.0) v = 1.0;
                }
                s[b] = static_cast<double>(static_cast<float>(v));
            }
        }
    }
    return cube;
}

} // namespace msfa
