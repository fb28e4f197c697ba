#pragma once

#include <string>

#include "msfa/core.hpp"
#include "msfa/parallel.hpp"
#include "msfa/rng.hpp"

namespace msfa {

// Forward measurement model: each pixel's spectrum collapses to one scalar
// through the sensitivity row of its position inside the periodically tiled
// block. Equivalent to applying the block-diagonal measurement operator per
// block, but never materializes it.
//
// noise_sigma > 0 adds white Gaussian noise to the measurements (clamped to
// the physical range [0, L]); the default is the noiseless model.
inline MosaickedImage mosaic(const SpectralCube& cube, const MsfaBlock& msfa, double noise_sigma = 0.0,
                             uint64_t noise_seed = 0) {
    if (cube.bands != msfa.bands)
        throw validation_error("mosaic: cube has " + std::to_string(cube.bands) + " bands, filter array has " +
                               std::to_string(msfa.bands));
    const BlockGeometry g = msfa.geometry;
    require_tiling(cube.height, cube.width, g, "mosaic");

    MosaickedImage out;
    out.height = cube.height;
    out.width = cube.width;
    out.geometry = g;
    out.source_scale = cube.scale;
    out.source_bands = cube.bands;
    out.source_wavelengths = cube.wavelengths;
    out.data.assign(static_cast<size_t>(cube.height) * cube.width, 0.0);

    const int bands = cube.bands;
    parallel_for(cube.height, [&](long y) {
        for (int x = 0; x < cube.width; ++x) {
            int m = static_cast<int>(y) % g.rows * g.cols + x % g.cols;
            auto phi = msfa.sensitivities.row(m);
            auto s = cube.spectrum(static_cast<int>(y), x);
            // Fixed left-to-right accumulation keeps runs bit-identical.
            double v = 0.0;
            for (int b = 0; b < bands; ++b) v += phi[static_cast<size_t>(b)] * s[static_cast<size_t>(b)];
            out.at(static_cast<int>(y), x) = v;
        }
    });

    if (noise_sigma > 0.0) {
        std::mt19937_64 rng(noise_seed);
        GaussianSampler gauss(rng);
        const double peak = static_cast<double>(bands);
        for (double& v : out.data) {
            v += noise_sigma * gauss();
            if (v < 0.0) v = 0.0;
            if (v > peak) v = peak;
        }
    }
    return out;
}

// Dense M x (L*M) block operator: row m carries the m-th sensitivity in
// columns [m*L, (m+1)*L). Used by small-scale equivalence checks and tools;
// the mosaic path above stays matrix-free.
inline Matrix materialize_block_operator(const MsfaBlock& msfa) {
    validate_msfa(msfa);
    const int m = msfa.geometry.pixels();
    const int l = msfa.bands;
    Matrix op(m, l * m);
    for (int i = 0; i < m; ++i)
        for (int b = 0; b < l; ++b) op(i, i * l + b) = msfa.sensitivities(i, b);
    return op;
}

} // namespace msfa
