#include "dsrl/cbf.hpp"

#include <algorithm>
#include <cmath>

#include "dsrl/linalg.hpp"

namespace dsrl {

double SafetyRow::eval(const Vec& u, const Vec& omega) const {
    return kernels::active().dot(a_u.data(), u.data(), a_u.size()) + b0 +
           kernels::active().dot(db_domega.data(), omega.data(),
                                 db_domega.size());
}

SafetyRow cbf_row_deg1(const BarrierSpec& spec, const EnvModel& model,
                       const Vec& x) {
    require(spec.relative_degree == 1, "cbf_row_deg1: wrong relative degree");
    const Vec grad = spec.grad_h(x);
    require(grad.size() == model.n, "cbf_row_deg1: gradient size");
    const Vec drift = model.f(x);
    const Matrix gx = model.g(x);

    SafetyRow row;
    row.a_u = matvec_t(gx, grad);  // grad' g
    row.b0 = dot_ref(grad, drift) + spec.kappa1 * spec.h(x);
    row.db_domega = grad;
    if (!all_finite(row.a_u) || !std::isfinite(row.b0))
        throw NumericError("cbf_row_deg1: non-finite row");
    return row;
}

SafetyRow cbf_row_deg2(const BarrierSpec& spec, const EnvModel& model,
                       const Vec& x) {
    require(spec.relative_degree == 2, "cbf_row_deg2: wrong relative degree");
    const Vec grad = spec.grad_h(x);
    const Matrix hess = spec.hess_h(x);
    require(grad.size() == model.n && hess.rows == model.n &&
                hess.cols == model.n,
            "cbf_row_deg2: barrier shape");
    const Vec drift = model.f(x);
    const Matrix gx = model.g(x);
    const Matrix jf = model.f_jacobian(x);
    const double k1 = spec.kappa1, k2 = spec.kappa2;

    // relative degree 2 demands grad' g = 0 (no direct control path) and
    // hess g = 0 (otherwise a u-omega cross term breaks the affine form)
    const Vec gg = matvec_t(gx, grad);
    if (norm_inf(gg) > 1e-9)
        throw NumericError("cbf_row_deg2: barrier has relative degree 1 here");
    const Matrix hg = matmul(hess, gx);
    if (norm_inf(hg.data) > 1e-9)
        throw NumericError("cbf_row_deg2: Hessian couples to the control");

    // psi2 = (f+w)' H (f+gu+w) + (Jf' grad + k1 grad).(f+gu+w)
    //        + k2 [grad.(f+w) + k1 h]
    // expanded to first order in w (the PSD w'Hw term is dropped):
    //   a_u = g' (H f + Jf' grad + k1 grad)          [k2 adds no u term]
    //   b0  = f'Hf + grad.(Jf f) + (k1+k2) grad.f + k1 k2 h
    //   db  = 2 H f + Jf' grad + (k1+k2) grad
    const Vec hf = matvec(hess, drift);
    const Vec jfg = matvec_t(jf, grad);

    Vec coef(model.n);
    for (std::size_t i = 0; i < model.n; ++i)
        coef[i] = hf[i] + jfg[i] + k1 * grad[i];

    SafetyRow row;
    row.a_u = matvec_t(gx, coef);
    row.b0 = dot_ref(drift, hf) + dot_ref(grad, matvec(jf, drift)) +
             (k1 + k2) * dot_ref(grad, drift) + k1 * k2 * spec.h(x);
    row.db_domega.resize(model.n);
    for (std::size_t i = 0; i < model.n; ++i)
        row.db_domega[i] = 2.0 * hf[i] + jfg[i] + (k1 + k2) * grad[i];
    if (!all_finite(row.a_u) || !std::isfinite(row.b0) ||
        !all_finite(row.db_domega))
        throw NumericError("cbf_row_deg2: non-finite row");
    return row;
}

SafetyRow cbf_row(const BarrierSpec& spec, const EnvModel& model, const Vec& x) {
    return spec.relative_degree == 1 ? cbf_row_deg1(spec, model, x)
                                     : cbf_row_deg2(spec, model, x);
}

SafetyRow average_row(const SafetyRow& base, const std::vector<Vec>& samples) {
    if (samples.empty()) throw ArgumentError("average_row: no samples");
    Vec mean(base.db_domega.size(), 0.0);
    for (const Vec& s : samples) {
        require(s.size() == mean.size(), "average_row: sample size");
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s[i];
    }
    for (auto& v : mean) v /= static_cast<double>(samples.size());
    SafetyRow out = base;
    out.b0 += dot_ref(base.db_domega, mean);
    return out;
}

SafetyQP assemble_safety_qp(const Vec& u_rl, const Vec& u_lo, const Vec& u_hi,
                            const std::vector<SafetyRow>& rows,
                            const Vec& omega) {
    const std::size_t m = u_rl.size();
    require(u_lo.size() == m && u_hi.size() == m, "assemble_safety_qp: bounds");
    for (std::size_t i = 0; i < m; ++i)
        if (!std::isfinite(u_lo[i]) || !std::isfinite(u_hi[i]) ||
            !(u_lo[i] < u_hi[i]))
            throw ArgumentError("assemble_safety_qp: bad box");

    SafetyQP out;
    out.num_cbf_rows = rows.size();
    const std::size_t k = rows.size() + 2 * m;
    const std::size_t n_omega = rows.empty() ? omega.size()
                                             : rows.front().db_domega.size();

    out.qp.Q = Matrix::identity(m);
    for (std::size_t i = 0; i < m; ++i) out.qp.Q(i, i) = 2.0;
    out.qp.q.resize(m);
    for (std::size_t i = 0; i < m; ++i) out.qp.q[i] = -2.0 * u_rl[i];

    out.qp.G = Matrix(k, m);
    out.qp.h.resize(k);
    out.dh_domega = Matrix(k, n_omega);

    for (std::size_t r = 0; r < rows.size(); ++r) {
        // a_u.u + b0 + db.w >= 0  ->  -a_u.u <= b0 + db.w
        require(rows[r].a_u.size() == m && rows[r].db_domega.size() == n_omega,
                "assemble_safety_qp: row shape");
        for (std::size_t j = 0; j < m; ++j) out.qp.G(r, j) = -rows[r].a_u[j];
        out.qp.h[r] = rows[r].eval(Vec(m, 0.0), omega);
        for (std::size_t j = 0; j < n_omega; ++j)
            out.dh_domega(r, j) = rows[r].db_domega[j];
    }
    for (std::size_t j = 0; j < m; ++j) {
        out.qp.G(rows.size() + 2 * j, j) = 1.0;  //  u_j <= hi
        out.qp.h[rows.size() + 2 * j] = u_hi[j];
        out.qp.G(rows.size() + 2 * j + 1, j) = -1.0;  // -u_j <= -lo
        out.qp.h[rows.size() + 2 * j + 1] = -u_lo[j];
    }
    return out;
}

Matrix du_domega(const SafetyQP& sqp, const QPSolution& sol) {
    try {
        const Matrix jh = qp_jacobian_wrt_h(sqp.qp, sol);
        return matmul(jh, sqp.dh_domega);
    } catch (const DegeneracyError&) {
        // graded nudge so even duplicated rows separate, then retry once
        QPInstance bumped = sqp.qp;
        for (std::size_t i = 0; i < bumped.h.size(); ++i)
            bumped.h[i] += 1e-9 * static_cast<double>(i + 1);
        const QPSolution sol2 = solve_qp(bumped);
        if (sol2.status != QPStatus::optimal)
            throw DegeneracyError("du_domega: perturbed QP not optimal");
        const Matrix jh = qp_jacobian_wrt_h(bumped, sol2);
        return matmul(jh, sqp.dh_domega);
    }
}

Vec fallback_action(const std::vector<SafetyRow>& rows, const Vec& u_lo,
                    const Vec& u_hi, const Vec& omega) {
    const std::size_t m = u_lo.size();
    require(!rows.empty(), "fallback_action: no rows");

    // epigraph LP: max t  s.t.  t - a_r.u <= b_r, lo <= u <= hi.
    // Stack every constraint as c.(u,t) <= d and enumerate vertices.
    struct Half {
        Vec c;  // length m+1, t last
        double d;
    };
    std::vector<Half> halves;
    for (const SafetyRow& row : rows) {
        Half hf;
        hf.c.assign(m + 1, 0.0);
        for (std::size_t j = 0; j < m; ++j) hf.c[j] = -row.a_u[j];
        hf.c[m] = 1.0;
        hf.d = row.b0 + dot_ref(row.db_domega, omega);
        halves.push_back(std::move(hf));
    }
    for (std::size_t j = 0; j < m; ++j) {
        Half up, dn;
        up.c.assign(m + 1, 0.0);
        up.c[j] = 1.0;
        up.d = u_hi[j];
        dn.c.assign(m + 1, 0.0);
        dn.c[j] = -1.0;
        dn.d = -u_lo[j];
        halves.push_back(std::move(up));
        halves.push_back(std::move(dn));
    }

    const std::size_t dim = m + 1;
    const std::size_t nh = halves.size();
    double best_t = -INFINITY;
    std::vector<Vec> best_vertices;

    std::vector<std::size_t> pick(dim);
    // enumerate all dim-subsets of constraint planes
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start,
                                                            std::size_t got) {
        if (got == dim) {
            Matrix a(dim, dim);
            Vec rhs(dim);
            for (std::size_t r = 0; r < dim; ++r) {
                for (std::size_t c = 0; c < dim; ++c)
                    a(r, c) = halves[pick[r]].c[c];
                rhs[r] = halves[pick[r]].d;
            }
            Vec v;
            try {
                v = solve_linear(a, rhs);
            } catch (const SingularSystemError&) {
                return;
            }
            for (const Half& hf : halves)
                if (dot_ref(hf.c, v) > hf.d + 1e-9) return;  // outside
            const double t = v[m];
            if (t > best_t + 1e-9) {
                best_t = t;
                best_vertices.clear();
            }
            if (t > best_t - 1e-9) best_vertices.push_back(v);
            return;
        }
        for (std::size_t i = start; i + (dim - got) <= nh; ++i) {
            pick[got] = i;
            rec(i + 1, got + 1);
        }
    };
    rec(0, 0);

    require(!best_vertices.empty(), "fallback_action: vertex search failed");

    // average the optimal face's vertices (deduplicated), so symmetric
    // instances return the symmetric point
    std::vector<Vec> unique;
    for (const Vec& v : best_vertices) {
        bool dup = false;
        for (const Vec& u : unique) {
            double dif = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                dif = std::max(dif, std::fabs(u[j] - v[j]));
            if (dif < 1e-7) {
                dup = true;
                break;
            }
        }
        if (!dup) unique.push_back(v);
    }
    Vec u(m, 0.0);
    for (const Vec& v : unique)
        for (std::size_t j = 0; j < m; ++j) u[j] += v[j];
    for (auto& x : u) x /= static_cast<double>(unique.size());
    // clamp away round-off
    for (std::size_t j = 0; j < m; ++j)
        u[j] = std::min(u_hi[j], std::max(u_lo[j], u[j]));
    return u;
}

std::vector<BarrierSpec> barriers_for(const EnvModel& model,
                                      const BarrierConfig& cfg) {
    std::vector<BarrierSpec> out;
    switch (model.kind) {
        case EnvKind::dubins1: {
            BarrierSpec s;
            const double cx = cfg.obstacle_x, cy = cfg.obstacle_y,
                         r2 = cfg.obstacle_r * cfg.obstacle_r;
            s.h = [cx, cy, r2](const Vec& x) {
                const double dx = x[0] - cx, dy = x[1] - cy;
                return dx * dx + dy * dy - r2;
            };
            s.grad_h = [cx, cy](const Vec& x) {
                return Vec{2 * (x[0] - cx), 2 * (x[1] - cy), 0.0};
            };
            s.relative_degree = 1;
            s.kappa1 = cfg.kappa1;
            out.push_back(std::move(s));
            break;
        }
        case EnvKind::dubins2: {
            BarrierSpec s;
            const double cx = cfg.obstacle_x, cy = cfg.obstacle_y,
                         r2 = cfg.obstacle_r * cfg.obstacle_r;
            s.h = [cx, cy, r2](const Vec& x) {
                const double dx = x[0] - cx, dy = x[1] - cy;
                return dx * dx + dy * dy - r2;
            };
            s.grad_h = [cx, cy](const Vec& x) {
                return Vec{2 * (x[0] - cx), 2 * (x[1] - cy), 0, 0, 0, 0};
            };
            s.hess_h = [](const Vec&) {
                Matrix h(6, 6);
                h(0, 0) = h(1, 1) = 2.0;
                return h;
            };
            s.relative_degree = 2;
            s.kappa1 = cfg.kappa1;
            s.kappa2 = cfg.kappa2;
            out.push_back(std::move(s));
            break;
        }
        case EnvKind::quad: {
            const double cot = 1.0 / std::tan(cfg.glide_slope_deg * M_PI / 180.0);
            const double c2 = cot * cot;
            BarrierSpec cone;
            cone.h = [c2](const Vec& x) {
                return x[2] * x[2] - c2 * (x[0] * x[0] + x[1] * x[1]);
            };
            cone.grad_h = [c2](const Vec& x) {
                return Vec{-2 * c2 * x[0], -2 * c2 * x[1], 2 * x[2]};
            };
            cone.relative_degree = 1;
            cone.kappa1 = cfg.kappa1;
            out.push_back(std::move(cone));

            BarrierSpec above;  // excludes the cone's lower nappe
            above.h = [](const Vec& x) { return x[2]; };
            above.grad_h = [](const Vec&) { return Vec{0.0, 0.0, 1.0}; };
            above.relative_degree = 1;
            above.kappa1 = cfg.kappa1;
            out.push_back(std::move(above));
            break;
        }
    }
    return out;
}

}  // namespace dsrl
