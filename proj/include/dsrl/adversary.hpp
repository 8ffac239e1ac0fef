#pragma once

#include <vector>

#include "dsrl/env.hpp"

namespace dsrl {

// Euclidean ambiguity ball around the empirical noise mean. The worst-case
// noise iterate lives inside it by construction.
struct AmbiguityBall {
    Vec center;
    double radius = 0.0;

    void validate() const;
};

struct AdversaryState {
    Vec omega;
    double step_size = 0.01;
    int iteration = 0;
};

/// Closest point of the ball: center + rho (w - c) / max(rho, ||w - c||).
/// Interior points map to themselves.
Vec project(const Vec& omega_bar, const AmbiguityBall& ball);

/// L = -sum_{k=1..T} gamma^k R_k, the discounted negative return of the
/// recorded rollout (discount starts at gamma^1).
double loss_from_trajectory(const Trajectory& traj, double gamma);

/// dL/dw for a constant noise vector shifting both the executed dynamics
/// noise and every step's constraint offsets. Reverse sweep over the
/// recorded open-loop trajectory: the adjoint runs through step_grads and
/// reward_grads, the recorded QP Jacobians carry the action channel, and
/// d x_next / d w = dt I carries the dynamics channel. Recorded actions are
/// treated as free inputs (no policy feedback term).
Vec grad_loss_wrt_omega(const Trajectory& traj, const EnvModel& model,
                        double gamma);

/// One ascent step then projection: w <- Proj[w + alpha dL/dw].
AdversaryState pga_update(const AdversaryState& state, const Vec& grad,
                          const AmbiguityBall& ball);

/// Ball radius from the Wasserstein budget plus the empirical sample
/// spread: rho_d = rho + mean ||w0_i - mean(w0)||. A documented heuristic;
/// configs may set rho_d directly instead.
double estimate_radius(const std::vector<Vec>& samples, double wasserstein_rho);

}  // namespace dsrl
