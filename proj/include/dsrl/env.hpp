#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dsrl/common.hpp"
#include "dsrl/matrix.hpp"

namespace dsrl {

enum class EnvKind { dubins1, dubins2, quad };

EnvKind env_kind_from_string(const std::string& name);
const char* env_kind_name(EnvKind kind);

// Control-affine plant xdot = f(x) + g(x) u + w integrated with explicit
// Euler, so step_grads are exact Jacobians of the simulated system.
//
//   dubins1: state (x, y, th), body-frame velocity input through R(th)
//   dubins2: state (x, y, th, xd, yd, thd), body-frame acceleration input
//   quad:    state (x, y, z), virtual control v = (T sin th,
//            T cos th sin ph, T cos th cos ph - g); attitude recovered
//            separately for logging
struct EnvModel {
    EnvKind kind = EnvKind::dubins1;
    std::size_t n = 3;  // state dim
    std::size_t m = 3;  // control dim
    double dt = 0.05;
    std::size_t horizon = 200;
    Vec u_lo, u_hi;
    Vec x0, xf;
    double reward_d = 0.1;  // position penalty weight
    double reward_b = 0.1;  // velocity penalty weight (dubins2)
    double reward_s = 0.1;  // per-step time penalty
    double goal_tol = 0.1;
    double gravity = 9.81;  // quad only

    Vec f(const Vec& x) const;
    Matrix g(const Vec& x) const;
    Matrix f_jacobian(const Vec& x) const;  // df/dx

    /// x + dt * (f + g u + omega); NumericError on a non-finite result.
    Vec step(const Vec& x, const Vec& u, const Vec& omega) const;

    double reward(const Vec& x, const Vec& u) const;
    void reward_grads(const Vec& x, const Vec& u, Vec& dr_dx, Vec& dr_du) const;

    /// Analytic Jacobians of step(); d x_next / d omega = dt*I exactly.
    void step_grads(const Vec& x, const Vec& u, const Vec& omega,
                    Matrix& dxn_dx, Matrix& dxn_du, Matrix& dxn_domega) const;

    /// Position-channel distance to xf below goal_tol.
    bool goal_reached(const Vec& x) const;

    /// Indices of the position channels the goal/reward distance runs over.
    std::vector<std::size_t> position_channels() const;

    static EnvModel make(EnvKind kind);

    bool operator==(const EnvModel&) const = default;
};

struct Attitude {
    double thrust = 0.0;
    double theta = 0.0;  // pitch
    double phi = 0.0;    // roll
};

/// Invert the virtual control map: v = (T sin th, T cos th sin ph,
/// T cos th cos ph - g). Thrust below 1e-9 (free fall) raises NumericError.
Attitude recover_attitude(const Vec& v, double g_accel);

/// Forward map for the round-trip check.
Vec attitude_to_virtual(const Attitude& att, double g_accel);

// One episode's record. omega_executed is the episode's dynamics noise
// (drawn once, applied every step); omega0_samples holds the per-step mean
// of the assembly-time noise draws (a sufficient statistic, since every row
// is affine in omega); jacobians holds d u_r / d omega when recorded.
struct Trajectory {
    std::vector<Vec> states;        // K+1
    std::vector<Vec> actions_rl;    // K
    std::vector<Vec> actions_rect;  // K
    Vec rewards;                    // K
    std::vector<Vec> omega0_samples;  // K, folded per-step mean
    Vec omega_executed;               // n
    std::vector<Matrix> jacobians;    // K or empty
    Vec h_min;                        // K, min barrier value after the step
    int fallback_count = 0;

    std::size_t length() const { return actions_rect.size(); }
};

/// Replay invariant: every recorded state reproduces step() bit-identically.
bool trajectory_consistent(const EnvModel& model, const Trajectory& traj);

/// One row per step: t, state..., u_rl..., u_r..., omega0..., reward, h.
std::string trajectory_to_csv(const EnvModel& model, const Trajectory& traj);

}  // namespace dsrl
