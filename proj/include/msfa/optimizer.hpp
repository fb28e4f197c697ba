#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "msfa/core.hpp"
#include "msfa/io.hpp"
#include "msfa/linalg.hpp"
#include "msfa/mosaic.hpp"
#include "msfa/parallel.hpp"
#include "msfa/rng.hpp"
#include "msfa/wiener.hpp"

namespace msfa {

// K orthonormal spectral vectors (rows), ordered by descending eigenvalue of
// the source autocorrelation. Projecting residuals on these is what makes
// the per-iteration subproblem cheap.
struct EigenBasis {
    Matrix vectors; // K x L
    enum class Source { training_derived, external_dataset } source = Source::training_derived;

    int k() const { return vectors.rows(); }
    int bands() const { return vectors.cols(); }
};

namespace detail {

inline EigenBasis eigenbasis_from_gram(Matrix gram, int k, long sample_count, EigenBasis::Source source) {
    const int l = gram.rows();
    if (k < 1 || k > l)
        throw validation_error("eigenbasis: K must lie in [1, " + std::to_string(l) + "], got " + std::to_string(k));
    if (sample_count < k)
        throw validation_error("eigenbasis: need at least " + std::to_string(k) + " spectra, got " +
                               std::to_string(sample_count));
    SymEig eig = sym_eig(std::move(gram));
    const double lam_max = eig.values.front();
    if (!(lam_max > 0.0) || !(eig.values[static_cast<size_t>(k - 1)] > lam_max * 1e-12))
        throw validation_error("eigenbasis: source spectra span fewer than K = " + std::to_string(k) +
                               " independent directions");
    EigenBasis basis;
    basis.source = source;
    basis.vectors = Matrix(k, l);
    for (int r = 0; r < k; ++r) {
        // Sign convention: the largest-magnitude entry of each row is positive.
        int arg = 0;
        for (int j = 1; j < l; ++j)
            if (std::abs(eig.vectors(r, j)) > std::abs(eig.vectors(r, arg))) arg = j;
        double sign = eig.vectors(r, arg) < 0.0 ? -1.0 : 1.0;
        for (int j = 0; j < l; ++j) basis.vectors(r, j) = sign * eig.vectors(r, j);
    }
    return basis;
}

} // namespace detail

// Top-K eigenvectors of the L x L autocorrelation of a spectra table
// (one sample per row).
inline EigenBasis build_eigenbasis(const Matrix& spectra, int k,
                                   EigenBasis::Source source = EigenBasis::Source::external_dataset) {
    const int s = spectra.rows();
    const int l = spectra.cols();
    Matrix gram(l, l);
    for (int r = 0; r < s; ++r) {
        auto row = spectra.row(r);
        for (int a = 0; a < l; ++a) {
            double va = row[static_cast<size_t>(a)];
            if (va == 0.0) continue;
            for (int b = a; b < l; ++b) gram(a, b) += va * row[static_cast<size_t>(b)];
        }
    }
    const double inv = 1.0 / static_cast<double>(s);
    for (int a = 0; a < l; ++a)
        for (int b = a; b < l; ++b) {
            double v = gram(a, b) * inv;
            gram(a, b) = v;
            gram(b, a) = v;
        }
    return detail::eigenbasis_from_gram(std::move(gram), k, s, source);
}

// Same, with every pixel of a cube as one spectral sample.
inline EigenBasis build_eigenbasis(const SpectralCube& cube, int k) {
    validate_cube_shape(cube);
    const int l = cube.bands;
    const long n = static_cast<long>(cube.height) * cube.width;
    Matrix gram(l, l);
    for (long p = 0; p < n; ++p) {
        const double* s = cube.data.data() + static_cast<size_t>(p) * l;
        for (int a = 0; a < l; ++a) {
            double va = s[a];
            if (va == 0.0) continue;
            for (int b = a; b < l; ++b) gram(a, b) += va * s[b];
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (int a = 0; a < l; ++a)
        for (int b = a; b < l; ++b) {
            double v = gram(a, b) * inv;
            gram(a, b) = v;
            gram(b, a) = v;
        }
    return detail::eigenbasis_from_gram(std::move(gram), k, n, EigenBasis::Source::training_derived);
}

struct OptimizerConfig {
    int iterations = 140;
    int k = 8;
    uint64_t seed = 0;
    // Relative Tikhonov weight: the absolute ridge passed to wiener_from is
    // ridge_rel * trace(Phi R Phi^T) / M, recomputed each iteration. 0 keeps
    // the bare inverse and lets singular systems fail loudly.
    double ridge_rel = 1e-8;
    double inner_tolerance = 1e-10;
    int inner_max_steps = 200;
    bool early_stop = false;

    void validate(int bands) const {
        if (iterations < 1) throw validation_error("config: iterations must be >= 1");
        if (k < 1 || k > bands) throw validation_error("config: K must lie in [1, bands]");
        if (!(inner_tolerance > 0.0)) throw validation_error("config: inner tolerance must be positive");
        if (inner_max_steps < 1) throw validation_error("config: inner_max_steps must be >= 1");
        if (ridge_rel < 0.0) throw validation_error("config: ridge must be nonnegative");
    }
};

struct TraceEntry {
    int iteration = 0;
    double reduced_objective = 0.0;   // accepted iterate, under this iteration's Wiener matrix
    double warm_start_objective = 0.0; // previous iterate under the same Wiener matrix
    double full_rmse = 0.0;
    double seconds = 0.0;
    bool inner_converged = true;
};

struct OptimizationTrace {
    std::vector<TraceEntry> entries;
    double initial_full_rmse = 0.0; // random start evaluated with its own Wiener matrix
    double final_full_rmse = 0.0;   // final iterate with the recomputed Wiener matrix
    bool early_stopped = false;
};

// Chain evaluation used for objectives and the trace: mosaic the training
// cube, reconstruct, and accumulate both the basis-projected and the full
// residual. Per-block partials are summed in block order, so the result does
// not depend on the worker count.
struct PairEvaluation {
    double reduced_norm = 0.0;
    double full_rmse = 0.0;
};

inline PairEvaluation evaluate_pair(const SpectralCube& training, const MsfaBlock& msfa, const WienerMatrix& w,
                                    const EigenBasis& basis) {
    if (training.bands != msfa.bands || msfa.bands != w.bands || basis.bands() != training.bands)
        throw validation_error("evaluate: band counts disagree");
    if (!(msfa.geometry == w.geometry)) throw validation_error("evaluate: block geometries disagree");
    const BlockGeometry g = msfa.geometry;
    require_tiling(training.height, training.width, g, "evaluate");

    const int l = training.bands;
    const int m = g.pixels();
    const int kk = basis.k();
    const int blocks_across = training.width / g.cols;
    const long b_total = static_cast<long>(training.height / g.rows) * blocks_across;

    std::vector<double> proj_sq(static_cast<size_t>(b_total));
    std::vector<double> full_sq(static_cast<size_t>(b_total));
    parallel_for(b_total, [&](long blk) {
        int br = static_cast<int>(blk / blocks_across);
        int bc = static_cast<int>(blk % blocks_across);
        std::vector<double> u = vectorize_block(training, br, bc, g);
        std::vector<double> v(static_cast<size_t>(m));
        for (int i = 0; i < m; ++i) {
            auto phi = msfa.sensitivities.row(i);
            double s = 0.0;
            for (int b = 0; b < l; ++b) s += phi[static_cast<size_t>(b)] * u[static_cast<size_t>(i * l + b)];
            v[static_cast<size_t>(i)] = s;
        }
        double ps = 0.0, fs = 0.0;
        std::vector<double> residual(static_cast<size_t>(l));
        for (int i = 0; i < m; ++i) {
            for (int b = 0; b < l; ++b) {
                auto row = w.matrix.row(i * l + b);
                double est = 0.0;
                for (int j = 0; j < m; ++j) est += row[static_cast<size_t>(j)] * v[static_cast<size_t>(j)];
                double r = u[static_cast<size_t>(i * l + b)] - est;
                residual[static_cast<size_t>(b)] = r;
                fs += r * r;
            }
            for (int q = 0; q < kk; ++q) {
                double pr = dot(basis.vectors.row(q), residual);
                ps += pr * pr;
            }
        }
        proj_sq[static_cast<size_t>(blk)] = ps;
        full_sq[static_cast<size_t>(blk)] = fs;
    });

    double proj_total = 0.0, full_total = 0.0;
    for (long b = 0; b < b_total; ++b) {
        proj_total += proj_sq[static_cast<size_t>(b)];
        full_total += full_sq[static_cast<size_t>(b)];
    }
    PairEvaluation out;
    out.reduced_norm = std::sqrt(proj_total);
    out.full_rmse = std::sqrt(full_total / static_cast<double>(training.sample_count()));
    return out;
}

// l2 norm over all pixels of the basis-projected reconstruction residual.
inline double reduced_objective(const MsfaBlock& msfa, const WienerMatrix& w, const SpectralCube& training,
                                const EigenBasis& basis) {
    return evaluate_pair(training, msfa, w, basis).reduced_norm;
}

namespace detail {

// With the Wiener matrix fixed, the reduced objective is an exact convex
// quadratic in the M*L free sensitivity entries:
//   f(p) = p^T H p - 2 g^T p + const,
// and both H and g collapse onto the block autocorrelation, so no pass over
// the training data is needed. Entry order matches the row-major layout of
// MsfaBlock::sensitivities.
struct InnerQuadratic {
    Matrix h;              // ML x ML, PSD
    std::vector<double> g; // ML
};

inline InnerQuadratic build_inner_quadratic(const BlockAutocorrelation& r, const WienerMatrix& w,
                                            const EigenBasis& basis) {
    const int l = r.bands;
    const int m = r.geometry.pixels();
    const int n = l * m;
    const int kk = basis.k();
    const double b_count = static_cast<double>(r.sample_count);

    // gram = U^T U (L x L).
    Matrix gram(l, l);
    for (int a = 0; a < l; ++a)
        for (int b = a; b < l; ++b) {
            double s = 0.0;
            for (int q = 0; q < kk; ++q) s += basis.vectors(q, a) * basis.vectors(q, b);
            gram(a, b) = s;
            gram(b, a) = s;
        }

    // t = (I_M kron U^T U) * W, block-row by block-row.
    Matrix t(n, m);
    for (int blk = 0; blk < m; ++blk)
        for (int a = 0; a < l; ++a)
            for (int j = 0; j < m; ++j) {
                double s = 0.0;
                for (int b = 0; b < l; ++b) s += gram(a, b) * w.matrix(blk * l + b, j);
                t(blk * l + a, j) = s;
            }

    // q = W^T t (M x M).
    Matrix q(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double s = 0.0;
            for (int row = 0; row < n; ++row) s += w.matrix(row, i) * t(row, j);
            q(i, j) = s;
        }

    InnerQuadratic out;
    out.h = Matrix(n, n);
    for (int mi = 0; mi < m; ++mi)
        for (int i = 0; i < l; ++i) {
            auto rrow = r.matrix.row(mi * l + i);
            auto hrow = out.h.row(mi * l + i);
            for (int mj = 0; mj < m; ++mj) {
                double qv = b_count * q(mi, mj);
                for (int j = 0; j < l; ++j)
                    hrow[static_cast<size_t>(mj * l + j)] = qv * rrow[static_cast<size_t>(mj * l + j)];
            }
        }
    // Neighboring entries of h may round differently across the diagonal;
    // symmetrize exactly so the QP solver sees a symmetric matrix.
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = 0.5 * (out.h(i, j) + out.h(j, i));
            out.h(i, j) = v;
            out.h(j, i) = v;
        }

    out.g.assign(static_cast<size_t>(n), 0.0);
    for (int mi = 0; mi < m; ++mi)
        for (int i = 0; i < l; ++i) {
            auto rrow = r.matrix.row(mi * l + i);
            double s = 0.0;
            for (int mj = 0; mj < m; ++mj)
                for (int j = 0; j < l; ++j) s += rrow[static_cast<size_t>(mj * l + j)] * t(mj * l + j, mi);
            out.g[static_cast<size_t>(mi * l + i)] = b_count * s;
        }
    return out;
}

struct BoxQpResult {
    std::vector<double> p;
    bool converged = false;
    int steps = 0;
    double projected_gradient_norm = 0.0;
};

// Primal active-set solver for the convex box QP
//   min f(p) = p^T H p - 2 g^T p,  p in [0, 1]^n,
// with H PSD and possibly numerically singular (the autocorrelation of
// smooth training data has fast eigendecay). Each step minimizes f exactly
// over the current free set, walks to the first blocking bound, and fixes
// the blockers; at a restricted optimum the worst wrong-signed bound
// multiplier is released. The free-set system uses Cholesky when definite
// and otherwise conjugate gradients, whose Krylov iterates give the
// minimum-norm Newton direction for consistent singular systems instead of
// amplifying null-space noise. Terminates at a KKT point:
//   || projected gradient || <= tol * (1 + || initial gradient ||).
inline BoxQpResult box_qp_solve(const Matrix& h, const std::vector<double>& lin, std::vector<double> p,
                                double tol, int max_steps) {
    const int n = h.rows();
    enum : char { kFree = 0, kLower = 1, kUpper = 2 };
    std::vector<char> state(static_cast<size_t>(n), kFree);
    for (int i = 0; i < n; ++i) {
        double& v = p[static_cast<size_t>(i)];
        if (v <= 0.0) {
            v = 0.0;
            state[static_cast<size_t>(i)] = kLower;
        } else if (v >= 1.0) {
            v = 1.0;
            state[static_cast<size_t>(i)] = kUpper;
        }
    }

    auto apply_h = [&](const std::vector<double>& x) {
        std::vector<double> y(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) y[static_cast<size_t>(i)] = dot(h.row(i), x);
        return y;
    };

    // Restricted Newton direction on the free set, solved in free-index space.
    auto solve_free = [&](const std::vector<int>& free_idx, const std::vector<double>& hp) {
        const int nf = static_cast<int>(free_idx.size());
        std::vector<double> rhs(static_cast<size_t>(nf));
        for (int a = 0; a < nf; ++a) {
            int i = free_idx[static_cast<size_t>(a)];
            rhs[static_cast<size_t>(a)] = lin[static_cast<size_t>(i)] - hp[static_cast<size_t>(i)];
        }
        Matrix hff(nf, nf);
        for (int a = 0; a < nf; ++a)
            for (int b = 0; b < nf; ++b)
                hff(a, b) = h(free_idx[static_cast<size_t>(a)], free_idx[static_cast<size_t>(b)]);
        Matrix fac = hff;
        if (cholesky_factor(fac)) {
            std::vector<double> d = rhs;
            cholesky_solve(fac, d);
            // Tiny pivots can slip through; verify the solve before using it.
            std::vector<double> check = mat_vec(hff, d);
            double err = 0.0, scale = 0.0;
            for (int a = 0; a < nf; ++a) {
                double e = check[static_cast<size_t>(a)] - rhs[static_cast<size_t>(a)];
                err += e * e;
                scale += rhs[static_cast<size_t>(a)] * rhs[static_cast<size_t>(a)];
            }
            if (err <= scale * 0.25) return d;
        }
        // Conjugate gradients from zero: for a consistent PSD system the
        // iterates stay in range(H_FF).
        std::vector<double> x(static_cast<size_t>(nf), 0.0);
        std::vector<double> r = rhs;
        double rr = dot(r, r);
        const double rhs_norm = std::sqrt(rr);
        if (rhs_norm == 0.0) return x;
        std::vector<double> d = r;
        const int max_cg = std::min(4 * nf, 2000);
        for (int it = 0; it < max_cg; ++it) {
            std::vector<double> hd = mat_vec(hff, d);
            double dhd = dot(d, hd);
            if (!(dhd > 0.0) || dhd <= rr * 1e-14) break; // numerical null space
            double alpha = rr / dhd;
            double rr_next = 0.0;
            for (int a = 0; a < nf; ++a) {
                x[static_cast<size_t>(a)] += alpha * d[static_cast<size_t>(a)];
                r[static_cast<size_t>(a)] -= alpha * hd[static_cast<size_t>(a)];
                rr_next += r[static_cast<size_t>(a)] * r[static_cast<size_t>(a)];
            }
            if (std::sqrt(rr_next) <= 1e-13 * rhs_norm) break;
            double beta = rr_next / rr;
            rr = rr_next;
            for (int a = 0; a < nf; ++a)
                d[static_cast<size_t>(a)] = r[static_cast<size_t>(a)] + beta * d[static_cast<size_t>(a)];
        }
        return x;
    };

    BoxQpResult res;
    std::vector<double> hp = apply_h(p);
    double initial_grad_norm = 0.0;
    for (int i = 0; i < n; ++i) {
        double gi = 2.0 * (hp[static_cast<size_t>(i)] - lin[static_cast<size_t>(i)]);
        initial_grad_norm += gi * gi;
    }
    initial_grad_norm = std::sqrt(initial_grad_norm);
    const double target = tol * (1.0 + initial_grad_norm);

    std::vector<double> grad(static_cast<size_t>(n));
    int zero_steps = 0;
    double best_pgn = std::numeric_limits<double>::infinity();
    int stalled_steps = 0;
    for (int step = 0; step < max_steps; ++step) {
        for (int i = 0; i < n; ++i)
            grad[static_cast<size_t>(i)] = 2.0 * (hp[static_cast<size_t>(i)] - lin[static_cast<size_t>(i)]);
        double pgn = 0.0;
        for (int i = 0; i < n; ++i) {
            double gi = grad[static_cast<size_t>(i)];
            bool blocked = (state[static_cast<size_t>(i)] == kLower && gi > 0.0) ||
                           (state[static_cast<size_t>(i)] == kUpper && gi < 0.0);
            if (!blocked) pgn += gi * gi;
        }
        pgn = std::sqrt(pgn);
        res.projected_gradient_norm = pgn;
        res.steps = step;
        if (pgn <= target) {
            res.converged = true;
            break;
        }
        // Cancellation in H p - g bounds the reachable gradient accuracy; once
        // the KKT residual stops improving we are at that floor.
        if (pgn < best_pgn * (1.0 - 1e-3)) {
            best_pgn = pgn;
            stalled_steps = 0;
        } else if (++stalled_steps >= 20) {
            break;
        }

        std::vector<int> free_idx;
        free_idx.reserve(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i)
            if (state[static_cast<size_t>(i)] == kFree) free_idx.push_back(i);

        std::vector<double> d;
        double d_inf = 0.0;
        if (!free_idx.empty()) {
            d = solve_free(free_idx, hp);
            for (double v : d) d_inf = std::max(d_inf, std::abs(v));
        }

        if (d_inf <= 1e-15) {
            // Restricted optimum: release every bound whose multiplier has the
            // wrong sign (within a factor of the worst violation, to avoid
            // chasing noise-level multipliers).
            double worst_violation = 0.0;
            for (int i = 0; i < n; ++i) {
                double violation = 0.0;
                if (state[static_cast<size_t>(i)] == kLower && grad[static_cast<size_t>(i)] < 0.0)
                    violation = -grad[static_cast<size_t>(i)];
                else if (state[static_cast<size_t>(i)] == kUpper && grad[static_cast<size_t>(i)] > 0.0)
                    violation = grad[static_cast<size_t>(i)];
                worst_violation = std::max(worst_violation, violation);
            }
            if (worst_violation == 0.0) break; // KKT up to the accuracy of the solves
            const double release_floor = worst_violation * 1e-6;
            for (int i = 0; i < n; ++i) {
                bool release = (state[static_cast<size_t>(i)] == kLower &&
                                grad[static_cast<size_t>(i)] < -release_floor) ||
                               (state[static_cast<size_t>(i)] == kUpper &&
                                grad[static_cast<size_t>(i)] > release_floor);
                if (release) state[static_cast<size_t>(i)] = kFree;
            }
            continue;
        }

        // Walk to the first blocking bound.
        double alpha = 1.0;
        for (size_t a = 0; a < free_idx.size(); ++a) {
            double di = d[a];
            double pi = p[static_cast<size_t>(free_idx[a])];
            if (di > 0.0)
                alpha = std::min(alpha, (1.0 - pi) / di);
            else if (di < 0.0)
                alpha = std::min(alpha, -pi / di);
        }
        if (alpha <= 0.0) {
            // Degenerate vertex: a just-released variable immediately blocks.
            // Take one exact projected-gradient step to break the cycle.
            if (++zero_steps >= 3) break;
            std::vector<double> sd(static_cast<size_t>(n), 0.0);
            for (int i = 0; i < n; ++i) {
                double gi = grad[static_cast<size_t>(i)];
                bool blocked = (p[static_cast<size_t>(i)] <= 0.0 && gi > 0.0) ||
                               (p[static_cast<size_t>(i)] >= 1.0 && gi < 0.0);
                if (!blocked) sd[static_cast<size_t>(i)] = -gi;
            }
            std::vector<double> hsd = apply_h(sd);
            double curvature = dot(sd, hsd);
            if (!(curvature > 0.0)) break;
            double step_len = dot(sd, sd) / (2.0 * curvature);
            for (int i = 0; i < n; ++i) {
                double v = p[static_cast<size_t>(i)] + step_len * sd[static_cast<size_t>(i)];
                p[static_cast<size_t>(i)] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                state[static_cast<size_t>(i)] =
                    p[static_cast<size_t>(i)] <= 0.0 ? kLower : (p[static_cast<size_t>(i)] >= 1.0 ? kUpper : kFree);
            }
            hp = apply_h(p);
            continue;
        }
        zero_steps = 0;

        if (alpha > 1.0) alpha = 1.0;
        for (size_t a = 0; a < free_idx.size(); ++a)
            p[static_cast<size_t>(free_idx[a])] += alpha * d[a];
        if (alpha < 1.0) {
            // Snap and fix everything that reached a bound.
            for (int i : free_idx) {
                double& v = p[static_cast<size_t>(i)];
                if (v <= 1e-15) {
                    v = 0.0;
                    state[static_cast<size_t>(i)] = kLower;
                } else if (v >= 1.0 - 1e-15) {
                    v = 1.0;
                    state[static_cast<size_t>(i)] = kUpper;
                }
            }
        }
        hp = apply_h(p);
    }
    res.p = std::move(p);
    return res;
}

} // namespace detail

struct InnerSolveResult {
    MsfaBlock block;
    bool converged = true;
    int steps = 0;
    double projected_gradient_norm = 0.0;
};

namespace detail {

struct InnerOutcome {
    InnerSolveResult result;
    PairEvaluation accepted_eval;
};

inline InnerOutcome inner_solve_with(const BlockAutocorrelation& r, const SpectralCube& training,
                                     const WienerMatrix& w_fixed, const EigenBasis& basis,
                                     const MsfaBlock& start, const PairEvaluation& start_eval,
                                     const OptimizerConfig& cfg) {
    InnerQuadratic quad = build_inner_quadratic(r, w_fixed, basis);
    BoxQpResult qp =
        box_qp_solve(quad.h, quad.g, start.sensitivities.data(), cfg.inner_tolerance, cfg.inner_max_steps);

    MsfaBlock candidate = start;
    candidate.sensitivities.data() = qp.p;

    InnerOutcome out;
    out.result.converged = qp.converged;
    out.result.steps = qp.steps;
    out.result.projected_gradient_norm = qp.projected_gradient_norm;
    // Never accept an increase of the reduced objective, measured by the same
    // chained evaluation the trace records.
    PairEvaluation candidate_eval = evaluate_pair(training, candidate, w_fixed, basis);
    if (candidate_eval.reduced_norm <= start_eval.reduced_norm) {
        out.result.block = std::move(candidate);
        out.accepted_eval = candidate_eval;
    } else {
        out.result.block = start;
        out.accepted_eval = start_eval;
    }
    return out;
}

} // namespace detail

// One pass of the constrained subproblem: minimize the reduced objective over
// sensitivities in [0, 1] with the Wiener matrix held fixed, warm-started
// from `start`. Non-convergence returns the best iterate with the flag down.
inline InnerSolveResult inner_solve(const SpectralCube& training, const WienerMatrix& w_fixed,
                                    const EigenBasis& basis, const MsfaBlock& start, const OptimizerConfig& cfg) {
    validate_msfa(start);
    cfg.validate(training.bands);
    BlockAutocorrelation r = estimate_autocorrelation(training, start.geometry);
    PairEvaluation start_eval = evaluate_pair(training, start, w_fixed, basis);
    return detail::inner_solve_with(r, training, w_fixed, basis, start, start_eval, cfg).result;
}

struct OptimizeResult {
    MsfaBlock msfa;
    WienerMatrix wiener;
    OptimizationTrace trace;
};

// The alternating solver: estimate the block autocorrelation once, start from
// a seeded uniform random block, then alternate Wiener rebuilds and
// constrained sensitivity updates for a fixed iteration count. The final
// Wiener matrix is recomputed from the final block.
inline OptimizeResult optimize(const SpectralCube& training, const BlockGeometry& geometry,
                               const EigenBasis& basis, const OptimizerConfig& cfg) {
    validate_cube_shape(training);
    cfg.validate(training.bands);
    require_tiling(training.height, training.width, geometry, "optimize");
    if (basis.bands() != training.bands)
        throw validation_error("optimize: basis band count does not match training cube");

    const int m = geometry.pixels();
    const int l = training.bands;

    BlockAutocorrelation r = estimate_autocorrelation(training, geometry);

    MsfaBlock phi;
    phi.geometry = geometry;
    phi.bands = l;
    phi.sensitivities = Matrix(m, l);
    std::mt19937_64 rng(cfg.seed);
    for (double& v : phi.sensitivities.data()) v = uniform01(rng);

    auto ridge_for = [&](const MsfaBlock& block) {
        return cfg.ridge_rel == 0.0 ? 0.0 : cfg.ridge_rel * measured_autocorr_trace(block, r) / m;
    };

    OptimizeResult out;
    out.trace.entries.reserve(static_cast<size_t>(cfg.iterations));
    {
        WienerMatrix w0 = wiener_from(phi, r, ridge_for(phi));
        out.trace.initial_full_rmse = evaluate_pair(training, phi, w0, basis).full_rmse;
    }

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        auto t0 = std::chrono::steady_clock::now();
        WienerMatrix w = wiener_from(phi, r, ridge_for(phi));
        PairEvaluation warm = evaluate_pair(training, phi, w, basis);
        detail::InnerOutcome inner = detail::inner_solve_with(r, training, w, basis, phi, warm, cfg);
        phi = std::move(inner.result.block);
        auto t1 = std::chrono::steady_clock::now();

        TraceEntry entry;
        entry.iteration = iter;
        entry.reduced_objective = inner.accepted_eval.reduced_norm;
        entry.warm_start_objective = warm.reduced_norm;
        entry.full_rmse = inner.accepted_eval.full_rmse;
        entry.seconds = std::chrono::duration<double>(t1 - t0).count();
        entry.inner_converged = inner.result.converged;
        out.trace.entries.push_back(entry);

        if (cfg.early_stop && out.trace.entries.size() >= 5) {
            const auto& e = out.trace.entries;
            double recent = e[e.size() - 5].reduced_objective;
            double now = e.back().reduced_objective;
            double denom = std::max(std::abs(recent), 1e-300);
            if (std::abs(now - recent) / denom < 1e-12) {
                out.trace.early_stopped = true;
                break;
            }
        }
    }

    out.wiener = wiener_from(phi, r, ridge_for(phi));
    out.trace.final_full_rmse = evaluate_pair(training, phi, out.wiener, basis).full_rmse;
    out.msfa = std::move(phi);

    // End-to-end improvement check. RMSEs below 1e-6 on [0,1] data mean exact
    // recovery; down there the ordering of two solver-noise values carries no
    // information, so the check only bites above that scale.
    if (out.trace.final_full_rmse > out.trace.initial_full_rmse * (1.0 + 1e-12) &&
        out.trace.final_full_rmse > 1e-6)
        throw numerical_error("optimize: final reconstruction RMSE " +
                              format_double(out.trace.final_full_rmse) + " exceeds the random start's " +
                              format_double(out.trace.initial_full_rmse));
    return out;
}

// Trace CSV: one row per completed iteration.
inline void write_trace_csv(const OptimizationTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open trace file for writing: " + path);
    out << "iteration,reduced_objective,full_rmse,seconds\n";
    for (const auto& e : trace.entries) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.6f\n", e.iteration, e.reduced_objective, e.full_rmse,
                      e.seconds);
        out << buf;
    }
    if (!out) throw io_error("failed writing trace file: " + path);
}

} // namespace msfa
