#pragma once

#include <cstddef>

#include "dsrl/common.hpp"
#include "dsrl/kernels.hpp"

namespace dsrl {

// Dense row-major matrix. Deliberately minimal: the project only needs
// storage, indexing and a few products, all routed through the kernel table.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }
    double* row_ptr(std::size_t i) { return data.data() + i * cols; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    Matrix transposed() const {
        Matrix t(cols, rows);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
        return t;
    }
};

// y = A x
inline Vec matvec(const Matrix& a, const Vec& x) {
    require(x.size() == a.cols, "matvec: size mismatch");
    Vec y(a.rows);
    kernels::active().matvec(a.data.data(), a.rows, a.cols, x.data(), y.data());
    return y;
}

// y = A^T x
inline Vec matvec_t(const Matrix& a, const Vec& x) {
    require(x.size() == a.rows, "matvec_t: size mismatch");
    Vec y(a.cols);
    kernels::active().matvec_t(a.data.data(), a.rows, a.cols, x.data(), y.data());
    return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matmul: size mismatch");
    Matrix c(a.rows, b.cols);
    // accumulate a row of C as sum_k A(i,k) * B(k,:) — row-major friendly
    for (std::size_t i = 0; i < a.rows; ++i)
        kernels::active().matvec_t(b.data.data(), b.rows, b.cols, a.row_ptr(i),
                                   c.row_ptr(i));
    return c;
}

}  // namespace dsrl
