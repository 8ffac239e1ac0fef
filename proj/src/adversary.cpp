#include "dsrl/adversary.hpp"

#include <cmath>

#include "dsrl/matrix.hpp"

namespace dsrl {

void AmbiguityBall::validate() const {
    if (!(radius > 0.0)) throw ArgumentError("ambiguity ball: radius must be > 0");
    if (!all_finite(center))
        throw NumericError("ambiguity ball: non-finite center");
}

Vec project(const Vec& omega_bar, const AmbiguityBall& ball) {
    ball.validate();
    require(omega_bar.size() == ball.center.size(), "project: size mismatch");
    const Vec d = sub(omega_bar, ball.center);
    const double scale = ball.radius / std::max(ball.radius, norm2(d));
    Vec out(ball.center);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * d[i];
    return out;
}

double loss_from_trajectory(const Trajectory& traj, double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw ArgumentError("loss_from_trajectory: gamma must be in (0, 1]");
    double loss = 0.0, disc = 1.0;
    for (double r : traj.rewards) {
        disc *= gamma;  // k starts at 1
        loss -= disc * r;
    }
    return loss;
}

Vec grad_loss_wrt_omega(const Trajectory& traj, const EnvModel& model,
                        double gamma) {
    const std::size_t k_steps = traj.length();
    if (traj.jacobians.size() != k_steps)
        throw ArgumentError(
            "grad_loss_wrt_omega: trajectory carries no QP Jacobians");
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw ArgumentError("grad_loss_wrt_omega: gamma must be in (0, 1]");
    require(traj.states.size() == k_steps + 1, "grad_loss_wrt_omega: states");

    Vec grad(model.n, 0.0);
    if (k_steps == 0) return grad;

    // discount weights c_k = -gamma^{k+1} on reward k (1-based exponent)
    Vec coef(k_steps);
    double disc = 1.0;
    for (std::size_t k = 0; k < k_steps; ++k) {
        disc *= gamma;
        coef[k] = -disc;
    }

    Vec dr_dx, dr_du;
    Matrix dxn_dx, dxn_du, dxn_dw;

    // adjoint = dL/dx_{k+1}, seeded by the final reward's state gradient
    model.reward_grads(traj.states[k_steps], traj.actions_rect[k_steps - 1],
                       dr_dx, dr_du);
    Vec adjoint = dr_dx;
    for (auto& v : adjoint) v *= coef[k_steps - 1];

    for (std::size_t k = k_steps; k-- > 0;) {
        model.reward_grads(traj.states[k + 1], traj.actions_rect[k], dr_dx,
                           dr_du);
        model.step_grads(traj.states[k], traj.actions_rect[k],
                         traj.omega_executed, dxn_dx, dxn_du, dxn_dw);

        // dL/du_k = (dx_{k+1}/du)' adjoint + c_k dR/du
        Vec dl_du = matvec_t(dxn_du, adjoint);
        for (std::size_t i = 0; i < model.m; ++i)
            dl_du[i] += coef[k] * dr_du[i];

        // action channel through the recorded QP sensitivity,
        // dynamics channel through dx_{k+1}/dw = dt I
        const Matrix& jac = traj.jacobians[k];
        require(jac.rows == model.m && jac.cols == model.n,
                "grad_loss_wrt_omega: Jacobian shape");
        const Vec ja = matvec_t(jac, dl_du);
        const Vec wa = matvec_t(dxn_dw, adjoint);
        for (std::size_t i = 0; i < model.n; ++i) grad[i] += ja[i] + wa[i];

        if (k == 0) break;
        // move the adjoint to dL/dx_k: chain through the step plus the
        // direct reward-k-1 term
        adjoint = matvec_t(dxn_dx, adjoint);
        model.reward_grads(traj.states[k], traj.actions_rect[k - 1], dr_dx,
                           dr_du);
        for (std::size_t i = 0; i < model.n; ++i)
            adjoint[i] += coef[k - 1] * dr_dx[i];
    }
    if (!all_finite(grad))
        throw NumericError("grad_loss_wrt_omega: non-finite gradient");
    return grad;
}

AdversaryState pga_update(const AdversaryState& state, const Vec& grad,
                          const AmbiguityBall& ball) {
    if (!(state.step_size > 0.0))
        throw ArgumentError("pga_update: step size must be > 0");
    if (!all_finite(grad))
        throw NumericError("pga_update: non-finite gradient, omega unchanged");
    require(grad.size() == state.omega.size(), "pga_update: size mismatch");
    AdversaryState next = state;
    Vec moved = state.omega;
    for (std::size_t i = 0; i < moved.size(); ++i)
        moved[i] += state.step_size * grad[i];
    next.omega = project(moved, ball);
    ++next.iteration;
    return next;
}

double estimate_radius(const std::vector<Vec>& samples,
                       double wasserstein_rho) {
    if (samples.empty())
        throw ArgumentError("estimate_radius: no samples");
    const std::size_t n = samples.front().size();
    Vec mean(n, 0.0);
    for (const Vec& s : samples) {
        require(s.size() == n, "estimate_radius: sample size");
        for (std::size_t i = 0; i < n; ++i) mean[i] += s[i];
    }
    for (auto& v : mean) v /= static_cast<double>(samples.size());
    double spread = 0.0;
    for (const Vec& s : samples) spread += norm2(sub(s, mean));
    spread /= static_cast<double>(samples.size());
    return wasserstein_rho + spread;
}

}  // namespace dsrl
