#include "dsrl/linalg.hpp"

#include <cmath>

namespace dsrl {

namespace {
constexpr double kPivotTol = 1e-12;
}

LuFactor::LuFactor(const Matrix& a) : n(a.rows), lu(a), perm(a.rows) {
    require(a.rows == a.cols, "LuFactor: matrix must be square");
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::fabs(lu(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double v = std::fabs(lu(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best < kPivotTol)
            throw SingularSystemError("LU pivot below tolerance at column " +
                                      std::to_string(k));
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
            std::swap(perm[k], perm[piv]);
        }
        const double inv = 1.0 / lu(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double m = lu(i, k) * inv;
            lu(i, k) = m;
            for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= m * lu(k, j);
        }
    }
}

Vec LuFactor::solve(const Vec& b) const {
    require(b.size() == n, "LuFactor::solve: size mismatch");
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm[i]];
    // forward: L y = Pb
    for (std::size_t i = 1; i < n; ++i) {
        double s = x[i];
        for (std::size_t j = 0; j < i; ++j) s -= lu(i, j) * x[j];
        x[i] = s;
    }
    // back: U x = y
    for (std::size_t ii = n; ii-- > 0;) {
        double s = x[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= lu(ii, j) * x[j];
        x[ii] = s / lu(ii, ii);
    }
    return x;
}

Vec solve_linear(const Matrix& a, const Vec& b) { return LuFactor(a).solve(b); }

}  // namespace dsrl
