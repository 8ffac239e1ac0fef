#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dsrl/matrix.hpp"

namespace dsrl {

// min_z 1/2 z'Qz + q'z  s.t.  Gz <= h,  Az = b (optional).
// The safety filter instantiates this with Q = 2I, q = -2*u_rl, box bounds
// folded into G so one code path carries all multipliers.
struct QPInstance {
    Matrix Q;
    Vec q;
    Matrix G;
    Vec h;
    Matrix A;  // 0x0 when absent
    Vec b;

    std::size_t num_vars() const { return q.size(); }
    std::size_t num_ineq() const { return h.size(); }
    std::size_t num_eq() const { return b.size(); }

    void validate() const;  // shapes + Q symmetric within 1e-10
};

enum class QPStatus { optimal, infeasible, max_iter };

struct QPSolution {
    Vec z_star;
    Vec lambda_star;                  // one per G row, >= 0
    Vec nu_star;                      // one per A row
    std::vector<std::size_t> active_set;  // rows with lambda > active_tol
    QPStatus status = QPStatus::max_iter;
    int iterations = 0;
};

struct QPOptions {
    double feas_tol = 1e-8;
    double active_tol = 1e-8;
    int max_iter = 200;
};

/// Working-set iteration with an exhaustive active-set enumeration fallback;
/// for a positive-definite Q the fallback is a complete decision procedure,
/// so status=infeasible is a certificate, not a guess.
QPSolution solve_qp(const QPInstance& qp, const QPOptions& opts = {});

/// dz*/dh (m x k) through the KKT system at the reported optimum. Columns of
/// inactive constraints are zero. Requires strict complementarity; a tight
/// row with a vanishing multiplier or a singular reduced KKT matrix raises
/// DegeneracyError (callers perturb h by 1e-9 and retry once).
Matrix qp_jacobian_wrt_h(const QPInstance& qp, const QPSolution& sol,
                         const QPOptions& opts = {});

struct KKTResiduals {
    double stationarity = 0.0;  // ||Qz + q + G'lambda + A'nu||_inf
    double primal = 0.0;        // max violation of Gz <= h and Az = b
    double slackness = 0.0;     // max_i |lambda_i (Gz - h)_i|
};

KKTResiduals kkt_residuals(const QPInstance& qp, const QPSolution& sol);

/// Debug dump for failure reproduction.
std::string qp_to_json(const QPInstance& qp);
QPInstance qp_from_json(const std::string& text);

}  // namespace dsrl
