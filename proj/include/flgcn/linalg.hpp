#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flgcn/errors.hpp"

namespace flgcn {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Sized for the small graphs this project
/// works with; no BLAS, plain loops.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    std::span<double> row(int i) { return {a.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int i) const {
        return {a.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
    }

    std::size_t size() const { return a.size(); }
    bool empty() const { return rows == 0 || cols == 0; }

    void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

inline double dot(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

/// y = W x
inline void matvec(const Matrix& W, std::span<const double> x, std::span<double> y) {
    if (static_cast<int>(x.size()) != W.cols || static_cast<int>(y.size()) != W.rows)
        fail(errc::shape, "matvec: got x[" + std::to_string(x.size()) + "], y[" + std::to_string(y.size()) +
                              "] for " + std::to_string(W.rows) + "x" + std::to_string(W.cols) + " matrix");
    for (int i = 0; i < W.rows; ++i) y[i] = dot(W.row(i), x);
}

/// y = W^T x
inline void matvec_t(const Matrix& W, std::span<const double> x, std::span<double> y) {
    if (static_cast<int>(x.size()) != W.rows || static_cast<int>(y.size()) != W.cols)
        fail(errc::shape, "matvec_t: shape mismatch");
    std::fill(y.begin(), y.end(), 0.0);
    for (int i = 0; i < W.rows; ++i) {
        auto r = W.row(i);
        for (int j = 0; j < W.cols; ++j) y[j] += x[i] * r[j];
    }
}

/// W += u v^T
inline void add_outer(Matrix& W, std::span<const double> u, std::span<const double> v) {
    if (static_cast<int>(u.size()) != W.rows || static_cast<int>(v.size()) != W.cols)
        fail(errc::shape, "add_outer: shape mismatch");
    for (int i = 0; i < W.rows; ++i) {
        auto r = W.row(i);
        for (int j = 0; j < W.cols; ++j) r[j] += u[i] * v[j];
    }
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// out = A B^T row by row: out[i] = B * A.row(i). A is n x p, B is q x p, out n x q.
inline Matrix matmul_bt(const Matrix& A, const Matrix& B) {
    Matrix out(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i) matvec(B, A.row(i), out.row(i));
    return out;
}

inline bool all_finite(const Matrix& m) {
    for (double v : m.a)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace flgcn
