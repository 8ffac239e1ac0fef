#include "dsrl/kernels.hpp"

#include <cmath>

// Reference kernels. Plain loops, one accumulator, no reassociation; these
// define the semantics the SIMD variants are tested against.

namespace dsrl::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double* y, double alpha, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_scalar(const double* a, std::size_t rows, std::size_t cols,
                   const double* x, double* y) {
    for (std::size_t i = 0; i < rows; ++i)
        y[i] = dot_scalar(a + i * cols, x, cols);
}

void matvec_t_scalar(const double* a, std::size_t rows, std::size_t cols,
                     const double* x, double* y) {
    for (std::size_t j = 0; j < cols; ++j) y[j] = 0.0;
    for (std::size_t i = 0; i < rows; ++i)
        axpy_scalar(y, x[i], a + i * cols, cols);
}

void rank1_acc_scalar(double* a, std::size_t rows, std::size_t cols,
                      const double* u, const double* v) {
    for (std::size_t i = 0; i < rows; ++i)
        axpy_scalar(a + i * cols, u[i], v, cols);
}

void adam_update_scalar(double* p, double* m, double* v, const double* g,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double bias1, double bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops{"scalar",         dot_scalar,       axpy_scalar,
                         matvec_scalar,    matvec_t_scalar,  rank1_acc_scalar,
                         adam_update_scalar};
    return ops;
}

}  // namespace dsrl::kernels
