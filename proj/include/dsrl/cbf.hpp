#pragma once

#include <functional>
#include <vector>

#include "dsrl/env.hpp"
#include "dsrl/matrix.hpp"
#include "dsrl/qp.hpp"

namespace dsrl {

// Barrier h(x) >= 0 defines the safe set. Linear class-K chain throughout:
// degree 1 enforces hdot + k1 h >= 0, degree 2 enforces
// psi2 = psi0dd + (k1+k2) psi0d + k1 k2 psi0 >= 0.
struct BarrierSpec {
    std::function<double(const Vec&)> h;
    std::function<Vec(const Vec&)> grad_h;      // full-state gradient
    std::function<Matrix(const Vec&)> hess_h;   // full-state Hessian (deg 2)
    int relative_degree = 1;
    double kappa1 = 1.0;
    double kappa2 = 1.0;  // unused at degree 1
};

// One affine-in-control safety inequality with its explicit noise coupling:
//   a_u . u + b0 + db_domega . omega >= 0
struct SafetyRow {
    Vec a_u;
    double b0 = 0.0;
    Vec db_domega;

    double eval(const Vec& u, const Vec& omega) const;
};

/// H(x,u,w) = grad_h . (f + g u + w) + k1 h as an affine row.
SafetyRow cbf_row_deg1(const BarrierSpec& spec, const EnvModel& model,
                       const Vec& x);

/// psi-chain row for relative degree 2. The omega-quadratic term w' hess w
/// is dropped; our degree-2 barriers have PSD Hessians, so the affine row
/// under-approximates psi2 and enforcing it is conservative.
SafetyRow cbf_row_deg2(const BarrierSpec& spec, const EnvModel& model,
                       const Vec& x);

SafetyRow cbf_row(const BarrierSpec& spec, const EnvModel& model, const Vec& x);

/// Expectation of the row over noise samples: affine in omega, so this is
/// exactly the base row with offset b0 + db . mean(samples).
SafetyRow average_row(const SafetyRow& base, const std::vector<Vec>& samples);

// The assembled filter QP plus the bookkeeping needed to push gradients
// through it: which h entries carry which noise sensitivity.
struct SafetyQP {
    QPInstance qp;
    Matrix dh_domega;  // k x n, zero rows for the box constraints
    std::size_t num_cbf_rows = 0;
};

/// min ||u - u_rl||^2 s.t. every row and the box; rows' offsets are taken at
/// the given omega.
SafetyQP assemble_safety_qp(const Vec& u_rl, const Vec& u_lo, const Vec& u_hi,
                            const std::vector<SafetyRow>& rows,
                            const Vec& omega);

/// d u_r / d omega = (dz*/dh) . (dh/domega). Retries once with the
/// documented 1e-9 offset nudge when the active set is degenerate.
Matrix du_domega(const SafetyQP& sqp, const QPSolution& sol);

/// Infeasible-QP fallback: argmax over the box of the minimum row margin,
/// found exactly by epigraph-LP vertex enumeration; ties (an optimal face)
/// resolve to the face's vertex average.
Vec fallback_action(const std::vector<SafetyRow>& rows, const Vec& u_lo,
                    const Vec& u_hi, const Vec& omega);

struct BarrierConfig {
    double obstacle_x = 3.0;
    double obstacle_y = 4.0;
    double obstacle_r = 1.0;
    double glide_slope_deg = 45.0;
    double kappa1 = 1.0;
    double kappa2 = 1.0;

    bool operator==(const BarrierConfig&) const = default;
};

/// The environment's barrier set: dubins obstacle disk (degree 1 or 2), or
/// the quad's glide-slope cone plus a z >= 0 row excluding the lower nappe.
std::vector<BarrierSpec> barriers_for(const EnvModel& model,
                                      const BarrierConfig& cfg);

}  // namespace dsrl
