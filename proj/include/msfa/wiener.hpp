#pragma once

#include <cfloat>
#include <limits>
#include <string>
#include <vector>

#include "msfa/core.hpp"
#include "msfa/linalg.hpp"
#include "msfa/parallel.hpp"

namespace msfa {

// Second-moment matrix of vectorized blocks, (1/B) * sum of outer products
// over all non-overlapping aligned blocks. No mean subtraction.
struct BlockAutocorrelation {
    BlockGeometry geometry;
    int bands = 0;
    Matrix matrix; // LM x LM, symmetric PSD
    long sample_count = 0;
};

// Linear reconstruction matrix mapping a block's M measurements back to its
// L*M samples, with the ridge that was used to build it.
struct WienerMatrix {
    BlockGeometry geometry;
    int bands = 0;
    Matrix matrix; // LM x M
    double ridge = 0.0;
};

inline BlockAutocorrelation estimate_autocorrelation(const SpectralCube& cube, const BlockGeometry& g) {
    require_tiling(cube.height, cube.width, g, "estimate_autocorrelation");
    const int blocks_down = cube.height / g.rows;
    const int blocks_across = cube.width / g.cols;
    const long b_total = static_cast<long>(blocks_down) * blocks_across;
    const int n = cube.bands * g.pixels();

    BlockAutocorrelation r;
    r.geometry = g;
    r.bands = cube.bands;
    r.sample_count = b_total;
    r.matrix = Matrix(n, n);

    // Sequential upper-triangle accumulation in block scan order; mirrored
    // afterwards so the result is exactly symmetric.
    for (int br = 0; br < blocks_down; ++br) {
        for (int bc = 0; bc < blocks_across; ++bc) {
            std::vector<double> u = vectorize_block(cube, br, bc, g);
            for (int i = 0; i < n; ++i) {
                double ui = u[static_cast<size_t>(i)];
                if (ui == 0.0) continue;
                auto row = r.matrix.row(i);
                for (int j = i; j < n; ++j) row[static_cast<size_t>(j)] += ui * u[static_cast<size_t>(j)];
            }
        }
    }
    const double inv_b = 1.0 / static_cast<double>(b_total);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double v = r.matrix(i, j) * inv_b;
            r.matrix(i, j) = v;
            r.matrix(j, i) = v;
        }
    return r;
}

// Trace of the M x M measured autocorrelation; the optimizer's relative
// ridge is expressed against trace/M.
inline double measured_autocorr_trace(const MsfaBlock& msfa, const BlockAutocorrelation& r) {
    const int m = msfa.geometry.pixels();
    const int l = msfa.bands;
    double tr = 0.0;
    for (int i = 0; i < m; ++i) {
        auto phi = msfa.sensitivities.row(i);
        for (int a = 0; a < l; ++a) {
            double s = 0.0;
            for (int b = 0; b < l; ++b) s += r.matrix(i * l + a, i * l + b) * phi[static_cast<size_t>(b)];
            tr += phi[static_cast<size_t>(a)] * s;
        }
    }
    return tr;
}

// Builds the reconstruction matrix R_u * Phi^T * (Phi * R_u * Phi^T + ridge*I)^-1
// for one block. With ridge = 0 the system must be invertible; a singular
// system raises numerical_error carrying the estimated condition number.
inline WienerMatrix wiener_from(const MsfaBlock& msfa, const BlockAutocorrelation& r, double ridge) {
    validate_msfa(msfa);
    if (!(msfa.geometry == r.geometry) || msfa.bands != r.bands)
        throw validation_error("wiener_from: filter array and autocorrelation disagree on geometry or bands");
    if (ridge < 0.0) throw validation_error("wiener_from: ridge must be nonnegative");

    const int m = msfa.geometry.pixels();
    const int l = msfa.bands;
    const int n = l * m;

    // cross = R_u * Phi^T, built block-column-wise from the sensitivity rows.
    Matrix cross(n, m);
    for (int j = 0; j < m; ++j) {
        auto phi = msfa.sensitivities.row(j);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            auto row = r.matrix.row(i);
            for (int b = 0; b < l; ++b) s += row[static_cast<size_t>(j * l + b)] * phi[static_cast<size_t>(b)];
            cross(i, j) = s;
        }
    }
    // measured = Phi * R_u * Phi^T + ridge * I.
    Matrix measured(m, m);
    for (int i = 0; i < m; ++i) {
        auto phi = msfa.sensitivities.row(i);
        for (int j = 0; j < m; ++j) {
            double s = 0.0;
            for (int b = 0; b < l; ++b) s += phi[static_cast<size_t>(b)] * cross(i * l + b, j);
            measured(i, j) = s;
        }
    }
    // Exact symmetrization before factorization.
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            double v = 0.5 * (measured(i, j) + measured(j, i));
            measured(i, j) = v;
            measured(j, i) = v;
        }
    for (int i = 0; i < m; ++i) measured(i, i) += ridge;

    SymEig eig = sym_eig(measured);
    const double lam_max = eig.values.front();
    const double lam_min = eig.values.back();
    if (ridge == 0.0) {
        double floor = lam_max * (DBL_EPSILON * m * 16);
        if (!(lam_min > floor)) {
            double cond = lam_min > 0.0 ? lam_max / lam_min : std::numeric_limits<double>::infinity();
            throw numerical_error("wiener_from: measured system is singular with ridge = 0 "
                                  "(estimated condition number " +
                                  std::to_string(cond) + "); supply a positive ridge");
        }
    }

    // inv = V diag(1/lambda) V^T.
    Matrix inv(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double s = 0.0;
            for (int k = 0; k < m; ++k)
                s += eig.vectors(k, i) * eig.vectors(k, j) / eig.values[static_cast<size_t>(k)];
            inv(i, j) = s;
        }

    WienerMatrix w;
    w.geometry = msfa.geometry;
    w.bands = l;
    w.ridge = ridge;
    w.matrix = mat_mul(cross, inv);
    return w;
}

// Blockwise linear reconstruction: every block's measurement vector maps
// through the Wiener matrix into the output block. Values are intentionally
// not clamped; [0,1] clipping belongs to rendering, not estimation.
inline SpectralCube demosaic(const MosaickedImage& img, const WienerMatrix& w) {
    if (!(img.geometry == w.geometry))
        throw validation_error("demosaic: mosaic block geometry " + std::to_string(img.geometry.rows) + "x" +
                               std::to_string(img.geometry.cols) + " does not match Wiener matrix " +
                               std::to_string(w.geometry.rows) + "x" + std::to_string(w.geometry.cols));
    if (img.source_bands != 0 && img.source_bands != w.bands)
        throw validation_error("demosaic: mosaic source has " + std::to_string(img.source_bands) +
                               " bands, Wiener matrix has " + std::to_string(w.bands));
    const BlockGeometry g = w.geometry;
    require_tiling(img.height, img.width, g, "demosaic");

    const int l = w.bands;
    const int m = g.pixels();
    SpectralCube out;
    out.height = img.height;
    out.width = img.width;
    out.bands = l;
    out.scale = img.source_scale;
    out.wavelengths = img.source_wavelengths;
    if (static_cast<int>(out.wavelengths.size()) != l) {
        out.wavelengths.resize(static_cast<size_t>(l));
        for (int b = 0; b < l; ++b) out.wavelengths[static_cast<size_t>(b)] = b + 1;
    }
    out.data.assign(out.sample_count(), 0.0);

    const int blocks_across = img.width / g.cols;
    const long b_total = static_cast<long>(img.height / g.rows) * blocks_across;
    parallel_for(b_total, [&](long blk) {
        int br = static_cast<int>(blk / blocks_across);
        int bc = static_cast<int>(blk % blocks_across);
        std::vector<double> v(static_cast<size_t>(m));
        for (int i = 0; i < m; ++i)
            v[static_cast<size_t>(i)] = img.at(br * g.rows + i / g.cols, bc * g.cols + i % g.cols);
        std::vector<double> u(static_cast<size_t>(l) * m, 0.0);
        for (int i = 0; i < l * m; ++i) {
            auto row = w.matrix.row(i);
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += row[static_cast<size_t>(j)] * v[static_cast<size_t>(j)];
            u[static_cast<size_t>(i)] = s;
        }
        devectorize_block(u, out, br, bc, g);
    });
    return out;
}

} // namespace msfa
