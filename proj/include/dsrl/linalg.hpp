#pragma once

#include <vector>

#include "dsrl/matrix.hpp"

namespace dsrl {

// Partial-pivot LU of a square matrix, kept so several right-hand sides can
// reuse one factorization (the QP sensitivity pass solves n+1 systems against
// the same KKT matrix). Throws SingularSystemError when a pivot collapses.
struct LuFactor {
    explicit LuFactor(const Matrix& a);

    Vec solve(const Vec& b) const;

    std::size_t n = 0;
    Matrix lu;                  // combined L (unit diag, below) / U (on+above)
    std::vector<std::size_t> perm;  // row permutation applied to b
};

// One-shot convenience: solve A x = b.
Vec solve_linear(const Matrix& a, const Vec& b);

}  // namespace dsrl
