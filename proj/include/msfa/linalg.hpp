#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "msfa/errors.hpp"

namespace msfa {

// Dense row-major matrix of doubles. Small problems only (a few hundred
// rows); everything here is written for clarity and reproducibility, not
// BLAS-level speed.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

    std::span<double> row(int i) { return {data_.data() + static_cast<size_t>(i) * cols_, static_cast<size_t>(cols_)}; }
    std::span<const double> row(int i) const {
        return {data_.data() + static_cast<size_t>(i) * cols_, static_cast<size_t>(cols_)};
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool operator==(const Matrix& o) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix mat_mul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw validation_error("mat_mul: inner dimensions disagree");
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

inline std::vector<double> mat_vec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != static_cast<int>(x.size())) throw validation_error("mat_vec: dimensions disagree");
    std::vector<double> y(static_cast<size_t>(a.rows()), 0.0);
    for (int i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < a.cols(); ++j) s += a(i, j) * x[static_cast<size_t>(j)];
        y[static_cast<size_t>(i)] = s;
    }
    return y;
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Symmetric eigendecomposition, A = V diag(values) V^T.
// `vectors` holds eigenvectors as rows, sorted by descending eigenvalue.
struct SymEig {
    std::vector<double> values;
    Matrix vectors;
};

// Cyclic Jacobi with the usual two-sided rotations. Robust for the sizes we
// deal with (autocorrelation and Gram matrices up to a few hundred rows).
inline SymEig sym_eig(Matrix a) {
    const int n = a.rows();
    if (n != a.cols()) throw validation_error("sym_eig: matrix not square");
    Matrix v = Matrix::identity(n);
    if (n == 1) return {{a(0, 0)}, v};

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) off += std::abs(a(p, q));
        if (off == 0.0) break;
        double thresh = sweep < 3 ? 0.2 * off / (n * n) : 0.0;

        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a(p, q);
                double g = 100.0 * std::abs(apq);
                if (sweep > 3 && std::abs(a(p, p)) + g == std::abs(a(p, p)) &&
                    std::abs(a(q, q)) + g == std::abs(a(q, q))) {
                    a(p, q) = 0.0;
                    a(q, p) = 0.0;
                    continue;
                }
                if (std::abs(apq) <= thresh) continue;

                double h = a(q, q) - a(p, p);
                double t;
                if (std::abs(h) + g == std::abs(h)) {
                    t = apq / h;
                } else {
                    double theta = 0.5 * h / apq;
                    t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                    if (theta < 0.0) t = -t;
                }
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                double tau = s / (1.0 + c);
                double hpq = t * apq;

                a(p, p) -= hpq;
                a(q, q) += hpq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                auto rotate = [&](double& x, double& y) {
                    double gx = x, hy = y;
                    x = gx - s * (hy + gx * tau);
                    y = hy + s * (gx - hy * tau);
                };
                for (int j = 0; j < p; ++j) {
                    rotate(a(j, p), a(j, q));
                    a(p, j) = a(j, p);
                    a(q, j) = a(j, q);
                }
                for (int j = p + 1; j < q; ++j) {
                    rotate(a(p, j), a(j, q));
                    a(j, p) = a(p, j);
                    a(q, j) = a(j, q);
                }
                for (int j = q + 1; j < n; ++j) {
                    rotate(a(p, j), a(q, j));
                    a(j, p) = a(p, j);
                    a(j, q) = a(q, j);
                }
                for (int j = 0; j < n; ++j) rotate(v(j, p), v(j, q));
            }
        }
    }

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });

    SymEig out;
    out.values.resize(static_cast<size_t>(n));
    out.vectors = Matrix(n, n);
    for (int k = 0; k < n; ++k) {
        int src = order[static_cast<size_t>(k)];
        out.values[static_cast<size_t>(k)] = a(src, src);
        for (int j = 0; j < n; ++j) out.vectors(k, j) = v(j, src);
    }
    return out;
}

// In-place lower Cholesky factor of a symmetric positive definite matrix.
// Returns false if a non-positive pivot shows up.
inline bool cholesky_factor(Matrix& a) {
    const int n = a.rows();
    for (int k = 0; k < n; ++k) {
        double d = a(k, k);
        for (int j = 0; j < k; ++j) d -= a(k, j) * a(k, j);
        if (!(d > 0.0)) return false;
        double lkk = std::sqrt(d);
        a(k, k) = lkk;
        for (int i = k + 1; i < n; ++i) {
            double s = a(i, k);
            for (int j = 0; j < k; ++j) s -= a(i, j) * a(k, j);
            a(i, k) = s / lkk;
        }
    }
    return true;
}

// Solves L L^T x = b given the factor from cholesky_factor. b is overwritten.
inline void cholesky_solve(const Matrix& l, std::span<double> b) {
    const int n = l.rows();
    for (int i = 0; i < n; ++i) {
        double s = b[static_cast<size_t>(i)];
        for (int j = 0; j < i; ++j) s -= l(i, j) * b[static_cast<size_t>(j)];
        b[static_cast<size_t>(i)] = s / l(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[static_cast<size_t>(i)];
        for (int j = i + 1; j < n; ++j) s -= l(j, i) * b[static_cast<size_t>(j)];
        b[static_cast<size_t>(i)] = s / l(i, i);
    }
}

} // namespace msfa
