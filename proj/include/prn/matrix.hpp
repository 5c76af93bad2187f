#pragma once

#include <cstddef>
#include <vector>

#include "prn/errors.hpp"

namespace prn {

/*
 * Dense row-major matrix of doubles. Deliberately tiny: the pipeline works
 * on matrices of at most a few hundred rows, and the hand-written gradient
 * code needs a fixed, transparent summation order in every product.
 */
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), v(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

    std::size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool operator==(const Matrix& o) const {
        return rows == o.rows && cols == o.cols && v == o.v;
    }
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeMismatch("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k)
                acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j)
            out(j, i) = a(i, j);
    return out;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw ShapeMismatch("matrix add: shapes differ");
    Matrix out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i)
        out.v[i] += b.v[i];
    return out;
}

inline Matrix& operator+=(Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw ShapeMismatch("matrix add: shapes differ");
    for (std::size_t i = 0; i < a.v.size(); ++i)
        a.v[i] += b.v[i];
    return a;
}

inline Matrix scaled(const Matrix& a, double s) {
    Matrix out = a;
    for (double& x : out.v)
        x *= s;
    return out;
}

} // namespace prn
