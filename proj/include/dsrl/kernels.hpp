#pragma once

#include <cstddef>

// Dense inner-loop kernels. Scalar reference implementations plus an AVX2
// variant selected once at startup (or forced via force_backend / the
// DSRL_KERNELS env var, values "scalar" / "avx2"). Both backends are
// deterministic; AVX2 uses FMA and 4-wide accumulators, so reductions differ
// from scalar by rounding only. adam_update is elementwise and bit-identical
// across backends.

namespace dsrl::kernels {

enum class Backend { scalar, avx2 };

struct Ops {
    const char* name;
    // sum_i a[i]*b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double* y, double alpha, const double* x, std::size_t n);
    // y = A x, A row-major rows x cols
    void (*matvec)(const double* a, std::size_t rows, std::size_t cols,
                   const double* x, double* y);
    // y = A^T x, A row-major rows x cols, y length cols
    void (*matvec_t)(const double* a, std::size_t rows, std::size_t cols,
                     const double* x, double* y);
    // A += u v^T
    void (*rank1_acc)(double* a, std::size_t rows, std::size_t cols,
                      const double* u, const double* v);
    // Adam: m = b1*m + (1-b1)*g ; v = b2*v + (1-b2)*g^2 ;
    //       p -= lr * (m/bias1) / (sqrt(v/bias2) + eps)
    void (*adam_update)(double* p, double* m, double* v, const double* g,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double bias1, double bias2);
};

const Ops& scalar_ops();
const Ops& avx2_ops();

bool avx2_supported();

/// Active backend: auto-detected on first use, honoring DSRL_KERNELS.
const Ops& active();

/// Force a specific backend (tests). Throws if unsupported on this CPU.
void force_backend(Backend b);

/// Return to auto-detection.
void reset_backend();

}  // namespace dsrl::kernels
