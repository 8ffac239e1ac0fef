#include "dsrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace dsrl {

EnvKind env_kind_from_string(const std::string& name) {
    if (name == "dubins1") return EnvKind::dubins1;
    if (name == "dubins2") return EnvKind::dubins2;
    if (name == "quad") return EnvKind::quad;
    throw ConfigError("unknown environment '" + name + "'");
}

const char* env_kind_name(EnvKind kind) {
    switch (kind) {
        case EnvKind::dubins1: return "dubins1";
        case EnvKind::dubins2: return "dubins2";
        case EnvKind::quad: return "quad";
    }
    return "?";
}

EnvModel EnvModel::make(EnvKind kind) {
    EnvModel e;
    e.kind = kind;
    switch (kind) {
        case EnvKind::dubins1:
            e.n = 3;
            e.m = 3;
            e.horizon = 200;
            e.u_lo = Vec(3, -2.0);
            e.u_hi = Vec(3, 2.0);
            e.x0 = {0.0, 0.0, 0.0};
            e.xf = {6.0, 8.0, 0.0};
            break;
        case EnvKind::dubins2:
            e.n = 6;
            e.m = 3;
            e.horizon = 200;
            e.u_lo = Vec(3, -2.0);
            e.u_hi = Vec(3, 2.0);
            e.x0 = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
            e.xf = {6.0, 8.0, 0.0, 0.0, 0.0, 0.0};
            break;
        case EnvKind::quad:
            e.n = 3;
            e.m = 3;
            e.horizon = 300;
            // +-2 keeps the worst one-Euler-step barrier dip (dt^2 cot^2 *
            // lateral speed^2) well inside the documented 0.05 margin
            e.u_lo = Vec(3, -2.0);
            e.u_hi = Vec(3, 2.0);
            e.x0 = {2.0, 2.0, 5.0};
            e.xf = {0.0, 0.0, 0.25};
            e.reward_d = 1.0;  // R = -||x - xf||^2, no extra terms
            e.reward_s = 0.0;
            e.reward_b = 0.0;
            break;
    }
    return e;
}

std::vector<std::size_t> EnvModel::position_channels() const {
    switch (kind) {
        case EnvKind::dubins1: return {0, 1};
        case EnvKind::dubins2: return {0, 1};
        case EnvKind::quad: {
            std::vector<std::size_t> all(n);
            for (std::size_t i = 0; i < n; ++i) all[i] = i;
            return all;  // full state is position
        }
    }
    return {};
}

namespace {

// rows 0..2 of the body-to-world rotation about z
void fill_rotation(Matrix& g, std::size_t row0, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    g(row0 + 0, 0) = c;
    g(row0 + 0, 1) = -s;
    g(row0 + 1, 0) = s;
    g(row0 + 1, 1) = c;
    g(row0 + 2, 2) = 1.0;
}

}  // namespace

Vec EnvModel::f(const Vec& x) const {
    require(x.size() == n, "EnvModel::f: state size");
    Vec out(n, 0.0);
    if (kind == EnvKind::dubins2)
        for (std::size_t i = 0; i < 3; ++i) out[i] = x[3 + i];
    return out;  // dubins1/quad: drift-free in (virtual) control form
}

Matrix EnvModel::g(const Vec& x) const {
    require(x.size() == n, "EnvModel::g: state size");
    Matrix out(n, m);
    switch (kind) {
        case EnvKind::dubins1:
            fill_rotation(out, 0, x[2]);
            break;
        case EnvKind::dubins2:
            fill_rotation(out, 3, x[2]);
            break;
        case EnvKind::quad:
            for (std::size_t i = 0; i < std::min(n, m); ++i) out(i, i) = 1.0;
            break;
    }
    return out;
}

Matrix EnvModel::f_jacobian(const Vec& x) const {
    require(x.size() == n, "EnvModel::f_jacobian: state size");
    Matrix j(n, n);
    if (kind == EnvKind::dubins2)
        for (std::size_t i = 0; i < 3; ++i) j(i, 3 + i) = 1.0;
    return j;
}

Vec EnvModel::step(const Vec& x, const Vec& u, const Vec& omega) const {
    require(u.size() == m && omega.size() == n, "EnvModel::step: sizes");
    const Vec drift = f(x);
    const Vec gu = matvec(g(x), u);
    Vec next(n);
    for (std::size_t i = 0; i < n; ++i)
        next[i] = x[i] + dt * (drift[i] + gu[i] + omega[i]);
    if (!all_finite(next))
        throw NumericError("EnvModel::step: non-finite state");
    return next;
}

double EnvModel::reward(const Vec& x, const Vec& /*u*/) const {
    double pos = 0.0;
    for (std::size_t i : position_channels()) {
        const double d = x[i] - xf[i];
        pos += d * d;
    }
    double vel = 0.0;
    if (kind == EnvKind::dubins2)
        for (std::size_t i = 3; i < 6; ++i) vel += x[i] * x[i];  // v_f = 0
    return -reward_d * pos - reward_b * vel - reward_s;
}

void EnvModel::reward_grads(const Vec& x, const Vec& /*u*/, Vec& dr_dx,
                            Vec& dr_du) const {
    dr_dx.assign(n, 0.0);
    dr_du.assign(m, 0.0);  // rewards are state-only
    for (std::size_t i : position_channels())
        dr_dx[i] = -2.0 * reward_d * (x[i] - xf[i]);
    if (kind == EnvKind::dubins2)
        for (std::size_t i = 3; i < 6; ++i) dr_dx[i] = -2.0 * reward_b * x[i];
}

void EnvModel::step_grads(const Vec& x, const Vec& u, const Vec& /*omega*/,
                          Matrix& dxn_dx, Matrix& dxn_du,
                          Matrix& dxn_domega) const {
    dxn_du = g(x);
    for (auto& v : dxn_du.data) v *= dt;

    dxn_domega = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) dxn_domega(i, i) = dt;

    // d x_next / d x = I + dt * (df/dx + d(g(x)u)/dx)
    dxn_dx = f_jacobian(x);
    if (kind != EnvKind::quad) {
        // d(R(th)u)/dth = (-s ux - c uy, c ux - s uy, 0)
        const double c = std::cos(x[2]), s = std::sin(x[2]);
        const std::size_t row = kind == EnvKind::dubins1 ? 0 : 3;
        dxn_dx(row + 0, 2) += -s * u[0] - c * u[1];
        dxn_dx(row + 1, 2) += c * u[0] - s * u[1];
    }
    for (auto& v : dxn_dx.data) v *= dt;
    for (std::size_t i = 0; i < n; ++i) dxn_dx(i, i) += 1.0;
}

bool EnvModel::goal_reached(const Vec& x) const {
    double d2 = 0.0;
    for (std::size_t i : position_channels()) {
        const double d = x[i] - xf[i];
        d2 += d * d;
    }
    return std::sqrt(d2) < goal_tol;
}

Attitude recover_attitude(const Vec& v, double g_accel) {
    require(v.size() == 3, "recover_attitude: v must be length 3");
    const double az = v[2] + g_accel;
    const double thrust = std::sqrt(v[0] * v[0] + v[1] * v[1] + az * az);
    if (thrust <= 1e-9)
        throw NumericError("recover_attitude: free-fall singularity (T ~ 0)");
    Attitude att;
    att.thrust = thrust;
    att.theta = std::asin(v[0] / thrust);
    att.phi = std::atan2(v[1], az);
    return att;
}

Vec attitude_to_virtual(const Attitude& att, double g_accel) {
    const double ct = std::cos(att.theta);
    return {att.thrust * std::sin(att.theta),
            att.thrust * ct * std::sin(att.phi),
            att.thrust * ct * std::cos(att.phi) - g_accel};
}

bool trajectory_consistent(const EnvModel& model, const Trajectory& traj) {
    if (traj.states.size() != traj.length() + 1) return false;
    for (std::size_t k = 0; k < traj.length(); ++k) {
        const Vec next =
            model.step(traj.states[k], traj.actions_rect[k], traj.omega_executed);
        if (std::memcmp(next.data(), traj.states[k + 1].data(),
                        next.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

std::string trajectory_to_csv(const EnvModel& model, const Trajectory& traj) {
    std::ostringstream out;
    out << "t";
    for (std::size_t i = 0; i < model.n; ++i) out << ",x" << i;
    for (std::size_t i = 0; i < model.m; ++i) out << ",u_rl" << i;
    for (std::size_t i = 0; i < model.m; ++i) out << ",u_r" << i;
    for (std::size_t i = 0; i < model.n; ++i) out << ",omega0_" << i;
    out << ",reward,h\n";
    for (std::size_t k = 0; k < traj.length(); ++k) {
        out << format_double(static_cast<double>(k) * model.dt);
        for (double v : traj.states[k]) out << "," << format_double(v);
        for (double v : traj.actions_rl[k]) out << "," << format_double(v);
        for (double v : traj.actions_rect[k]) out << "," << format_double(v);
        for (double v : traj.omega0_samples[k]) out << "," << format_double(v);
        out << "," << format_double(traj.rewards[k]);
        out << "," << format_double(k < traj.h_min.size() ? traj.h_min[k] : 0.0);
        out << "\n";
    }
    return out.str();
}

}  // namespace dsrl
