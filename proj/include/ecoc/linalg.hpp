#pragma once
// Minimal dense linear algebra for small row-major matrices. The models here
// are a few hundred parameters, so plain loops keep every fp operation in a
// fixed, reproducible order.

#include <cstddef>
#include <span>
#include <vector>

namespace ecoc {

using Vec = std::vector<double>;

namespace linalg {

struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double* row(std::size_t i) { return a.data() + i * cols; }
    const double* row(std::size_t i) const { return a.data() + i * cols; }
    std::span<double> row_span(std::size_t i) { return {row(i), cols}; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }
    double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
    std::size_t size() const { return a.size(); }
    void zero() { a.assign(a.size(), 0.0); }
};

inline double dot(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

// y += c * x
inline void axpy(double c, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

// y = A x
inline void matvec(const Mat& m, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < m.rows; ++i) y[i] = dot(m.row_span(i), x);
}

// y = A^T x
inline void mat_t_vec(const Mat& m, std::span<const double> x, std::span<double> y) {
    for (std::size_t j = 0; j < m.cols; ++j) y[j] = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += xi * r[j];
    }
}

// A += g * x y^T
inline void add_outer(Mat& m, double g, std::span<const double> x, std::span<const double> y) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* r = m.row(i);
        const double gx = g * x[i];
        for (std::size_t j = 0; j < m.cols; ++j) r[j] += gx * y[j];
    }
}

}  // namespace linalg
}  // namespace ecoc
