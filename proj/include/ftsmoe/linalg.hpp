// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense f64 containers and kernels used by the model. Row-major,
// contiguous, no aliasing tricks; the loop order of every reduction is fixed so
// that results are bitwise reproducible.
#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace ftsmoe {

using Vector = std::vector<double>;

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    bool operator==(const Matrix&) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// out = M x
inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
    assert(x.size() == m.cols && out.size() == m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) out[r] = dot(m.row(r), x);
}

inline Vector matvec(const Matrix& m, std::span<const double> x) {
    Vector out(m.rows);
    matvec(m, x, out);
    return out;
}

// dx += M^T dy
inline void matvec_t_acc(const Matrix& m, std::span<const double> dy, std::span<double> dx) {
    assert(dy.size() == m.rows && dx.size() == m.cols);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        const double* w = m.data.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) dx[c] += g * w[c];
    }
}

// dM += dy x^T
inline void outer_acc(Matrix& dm, std::span<const double> dy, std::span<const double> x) {
    assert(dy.size() == dm.rows && x.size() == dm.cols);
    for (std::size_t r = 0; r < dm.rows; ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        double* w = dm.data.data() + r * dm.cols;
        for (std::size_t c = 0; c < dm.cols; ++c) w[c] += g * x[c];
    }
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double swish(double z) { return z * sigmoid(z); }

inline double swish_grad(double z) {
    const double s = sigmoid(z);
    return s + z * s * (1.0 - s);
}

}  // namespace ftsmoe
