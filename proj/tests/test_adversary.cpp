// Worst-case noise machinery: ball projection, discounted loss, the
// trajectory adjoint against a re-simulation finite-difference oracle, and
// the projected ascent step.

#include <algorithm>
#include <cmath>

#include "dsrl/adversary.hpp"
#include "dsrl/cbf.hpp"
#include "dsrl/qp.hpp"
#include "harness.hpp"

using namespace dsrl;

namespace {

Rng rng(90210135);

Vec random_vec(std::size_t n, double lo, double hi) {
    Vec v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

void projection() {
    AmbiguityBall unit{Vec(2, 0.0), 1.0};
    {
        const Vec p = project({3.0, 4.0}, unit);
        CHECK_NEAR(p[0], 0.6, 1e-15);
        CHECK_NEAR(p[1], 0.8, 1e-15);
    }
    {
        const Vec p = project({0.2, 0.1}, unit);
        CHECK_NEAR(p[0], 0.2, 0.0);
        CHECK_NEAR(p[1], 0.1, 0.0);
    }
    {
        // boundary points are fixed points
        const Vec b{0.6, -0.8};
        const Vec p = project(b, unit);
        CHECK_NEAR(p[0], b[0], 1e-15);
        CHECK_NEAR(p[1], b[1], 1e-15);
    }
    {
        // off-center ball
        AmbiguityBall ball{{1.0, -2.0, 0.5}, 0.25};
        const Vec p = project({5.0, -2.0, 0.5}, ball);
        CHECK_NEAR(p[0], 1.25, 1e-15);
        CHECK_NEAR(p[1], -2.0, 1e-15);
        CHECK_NEAR(p[2], 0.5, 1e-15);
    }
    // idempotence and non-expansiveness on random pairs
    AmbiguityBall ball{{0.3, -0.7}, 0.8};
    double worst_gap = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const Vec a = random_vec(2, -4.0, 4.0);
        const Vec b = random_vec(2, -4.0, 4.0);
        const Vec pa = project(a, ball), pb = project(b, ball);
        CHECK_NEAR(norm2(sub(project(pa, ball), pa)), 0.0, 1e-15);
        CHECK(norm2(sub(pa, ball.center)) <= ball.radius + 1e-12);
        worst_gap =
            std::max(worst_gap, norm2(sub(pa, pb)) - norm2(sub(a, b)));
    }
    CHECK(worst_gap <= 1e-12);

    AmbiguityBall bad{{0.0}, 0.0};
    CHECK_THROWS(ArgumentError, project({1.0}, bad));
}

void loss() {
    Trajectory traj;
    traj.rewards = {-1.0, -1.0, -1.0};
    CHECK_NEAR(loss_from_trajectory(traj, 1.0), 3.0, 0.0);
    traj.rewards = {-1.0, -1.0};
    CHECK_NEAR(loss_from_trajectory(traj, 0.5), 0.75, 0.0);
    CHECK_THROWS(ArgumentError, loss_from_trajectory(traj, 0.0));
    CHECK_THROWS(ArgumentError, loss_from_trajectory(traj, 1.5));
    // direct-sum oracle on random rewards
    for (int trial = 0; trial < 50; ++trial) {
        Trajectory t;
        const std::size_t k = 1 + rng.uniform_index(30);
        t.rewards = random_vec(k, -5.0, 5.0);
        const double gamma = rng.uniform(0.2, 1.0);
        double want = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            want -= std::pow(gamma, static_cast<double>(i + 1)) * t.rewards[i];
        CHECK_NEAR(loss_from_trajectory(t, gamma), want, 1e-12);
    }
}

// filtered rollout with frozen per-step policy inputs; also hands back the
// frozen rows so the oracle can replay the same open-loop map
struct FrozenRollout {
    Trajectory traj;
    std::vector<std::vector<SafetyRow>> rows;
    bool ok = false;
    bool filter_active = false;
};

FrozenRollout roll(const EnvModel& e, const std::vector<BarrierSpec>& barriers,
                   const Vec& x0, const std::vector<Vec>& u_rl_seq,
                   const Vec& omega) {
    FrozenRollout out;
    out.traj.omega_executed = omega;
    out.traj.states.push_back(x0);
    Vec x = x0;
    for (const Vec& u_rl : u_rl_seq) {
        std::vector<SafetyRow> rows;
        for (const auto& s : barriers) rows.push_back(cbf_row(s, e, x));
        const SafetyQP sqp =
            assemble_safety_qp(u_rl, e.u_lo, e.u_hi, rows, omega);
        const QPSolution sol = solve_qp(sqp.qp);
        if (sol.status != QPStatus::optimal) return out;  // caller redraws
        Matrix jac;
        try {
            jac = du_domega(sqp, sol);
        } catch (const DegeneracyError&) {
            return out;
        }
        for (double v : jac.data)
            if (v != 0.0) out.filter_active = true;
        x = e.step(x, sol.z_star, omega);
        out.traj.states.push_back(x);
        out.traj.actions_rl.push_back(u_rl);
        out.traj.actions_rect.push_back(sol.z_star);
        out.traj.rewards.push_back(e.reward(x, sol.z_star));
        out.traj.omega0_samples.push_back(Vec(e.n, 0.0));
        out.traj.jacobians.push_back(jac);
        out.traj.h_min.push_back(0.0);
        out.rows.push_back(std::move(rows));
    }
    out.ok = true;
    return out;
}

// loss of the frozen open-loop map at noise w: recorded rows and raw
// actions, QP re-solved at w, dynamics stepped at w
double frozen_loss(const EnvModel& e, const FrozenRollout& base, const Vec& w,
                   double gamma, bool* active_set_stable) {
    Vec x = base.traj.states[0];
    double loss = 0.0, disc = 1.0;
    for (std::size_t k = 0; k < base.rows.size(); ++k) {
        const SafetyQP sqp = assemble_safety_qp(
            base.traj.actions_rl[k], e.u_lo, e.u_hi, base.rows[k], w);
        const QPSolution sol = solve_qp(sqp.qp);
        if (sol.status != QPStatus::optimal) {
            *active_set_stable = false;
            return 0.0;
        }
        x = e.step(x, sol.z_star, w);
        disc *= gamma;
        loss -= disc * e.reward(x, sol.z_star);
    }
    return loss;
}

void grad_trivial_cases() {
    const EnvModel e = EnvModel::make(EnvKind::dubins1);
    {
        // parked on the goal: every reward gradient vanishes, so the
        // adjoint never picks anything up
        Trajectory t;
        t.omega_executed = Vec(3, 0.0);
        Vec x = e.xf;
        t.states = {x, x, x, x};
        for (int k = 0; k < 3; ++k) {
            t.actions_rect.push_back(Vec(3, 0.0));
            t.actions_rl.push_back(Vec(3, 0.0));
            t.rewards.push_back(e.reward(x, Vec(3, 0.0)));
            Matrix j(3, 3);
            j(0, 0) = 0.4;  // nonzero Jacobian must still propagate zero
            t.jacobians.push_back(j);
            t.omega0_samples.push_back(Vec(3, 0.0));
            t.h_min.push_back(1.0);
        }
        const Vec g = grad_loss_wrt_omega(t, e, 0.9);
        for (double v : g) CHECK_NEAR(v, 0.0, 0.0);

        Trajectory missing = t;
        missing.jacobians.clear();
        CHECK_THROWS(ArgumentError, grad_loss_wrt_omega(missing, e, 0.9));
    }
    {
        // one step, hand-set Jacobian: dL/dw = J' (dt g' a1) + dt a1 with
        // a1 = -gamma dR/dx(x1)
        const double gamma = 0.8;
        Trajectory t;
        t.omega_executed = {0.02, -0.01, 0.03};
        const Vec x0{1.0, 2.0, 0.5};
        const Vec u{0.7, -0.4, 0.2};
        const Vec x1 = e.step(x0, u, t.omega_executed);
        t.states = {x0, x1};
        t.actions_rl = {u};
        t.actions_rect = {u};
        t.rewards = {e.reward(x1, u)};
        Matrix j(3, 3);
        const double jv[9] = {0.5, 0.1, 0.0, -0.2, 0.3, 0.0, 0.0, 0.0, 0.25};
        for (int i = 0; i < 9; ++i) j.data[i] = jv[i];
        t.jacobians = {j};
        t.omega0_samples = {Vec(3, 0.0)};
        t.h_min = {1.0};

        // hand chain, written out long-form
        Vec a1(3, 0.0);
        a1[0] = -gamma * (-2.0 * e.reward_d * (x1[0] - e.xf[0]));
        a1[1] = -gamma * (-2.0 * e.reward_d * (x1[1] - e.xf[1]));
        const double c = std::cos(x0[2]), s = std::sin(x0[2]);
        // dl_du = dt * R(th)' a1 (theta column of g is e3)
        const Vec dl_du{e.dt * (c * a1[0] + s * a1[1]),
                        e.dt * (-s * a1[0] + c * a1[1]), e.dt * a1[2]};
        Vec want(3, 0.0);
        for (int col = 0; col < 3; ++col) {
            for (int r = 0; r < 3; ++r) want[col] += j(r, col) * dl_du[r];
            want[col] += e.dt * a1[col];
        }
        const Vec got = grad_loss_wrt_omega(t, e, gamma);
        for (int i = 0; i < 3; ++i) CHECK_NEAR(got[i], want[i], 1e-14);
    }
}

void grad_fd_oracle(EnvKind kind, int scenarios) {
    const EnvModel e = EnvModel::make(kind);
    const auto barriers = barriers_for(e, BarrierConfig{});
    const double gamma = 0.95;
    const double fd = 1e-5;
    double worst = 0.0;
    int done = 0, active = 0, discarded = 0;
    while (done < scenarios) {
        REQUIRE(discarded < 200);
        // park near the obstacle so the filter has work to do
        Vec x0;
        if (kind == EnvKind::dubins1)
            x0 = {rng.uniform(0.5, 1.8), rng.uniform(2.5, 4.5),
                  rng.uniform(-0.5, 0.8)};
        else if (kind == EnvKind::dubins2)
            x0 = {rng.uniform(0.5, 1.8), rng.uniform(2.5, 4.5),
                  rng.uniform(-0.5, 0.8), rng.uniform(0.0, 1.0),
                  rng.uniform(0.0, 1.0), 0.0};
        else {
            // just inside the cone wall, where the box-limited control can
            // still press against it
            const double z = rng.uniform(0.8, 1.6);
            const double q = rng.uniform(0.6, 0.95);
            const double phi = rng.uniform(0.0, 6.2831853071795862);
            x0 = {z * q * std::cos(phi), z * q * std::sin(phi), z};
        }
        bool unsafe = false;
        for (const auto& s : barriers)
            if (s.h(x0) < 0.05) unsafe = true;
        if (unsafe) {
            ++discarded;
            continue;
        }
        std::vector<Vec> u_seq;
        for (int k = 0; k < 3; ++k) {
            Vec u(e.m);
            for (std::size_t i = 0; i < e.m; ++i)
                u[i] = rng.uniform(0.3 * e.u_lo[i], e.u_hi[i]);
            u_seq.push_back(u);
        }
        const Vec omega = random_vec(e.n, -0.08, 0.08);
        const FrozenRollout base = roll(e, barriers, x0, u_seq, omega);
        if (!base.ok) {
            ++discarded;
            continue;
        }
        const Vec g = grad_loss_wrt_omega(base.traj, e, gamma);

        bool stable = true;
        Vec g_fd(e.n, 0.0);
        for (std::size_t jx = 0; jx < e.n && stable; ++jx) {
            Vec wp = omega, wm = omega;
            wp[jx] += fd;
            wm[jx] -= fd;
            const double lp = frozen_loss(e, base, wp, gamma, &stable);
            const double lm = frozen_loss(e, base, wm, gamma, &stable);
            g_fd[jx] = (lp - lm) / (2 * fd);
        }
        if (!stable) {
            ++discarded;
            continue;
        }
        for (std::size_t i = 0; i < e.n; ++i) {
            const double err = std::fabs(g[i] - g_fd[i]) /
                               std::max(1.0, std::fabs(g_fd[i]));
            worst = std::max(worst, err);
        }
        if (base.filter_active) ++active;
        ++done;
    }
    CHECK(worst <= 1e-3);
    // the sweep must include rollouts where the QP actually rectified
    CHECK(active >= scenarios / 4);
    if (worst > 1e-3)
        std::printf("  %s grad fd worst rel err %.3e (active %d/%d)\n",
                    env_kind_name(kind), worst, active, done);
}

void pga() {
    AmbiguityBall ball{{0.1, -0.2}, 0.5};
    AdversaryState st;
    st.omega = {0.1, -0.2};
    st.step_size = 0.05;
    {
        const AdversaryState next = pga_update(st, {0.0, 0.0}, ball);
        CHECK(next.omega == st.omega);
        CHECK(next.iteration == 1);
    }
    {
        const AdversaryState next = pga_update(st, {0.3, 0.4}, ball);
        CHECK_NEAR(next.omega[0], 0.1 + 0.05 * 0.3, 1e-15);
        CHECK_NEAR(next.omega[1], -0.2 + 0.05 * 0.4, 1e-15);
    }
    {
        const AdversaryState next = pga_update(st, {400.0, 300.0}, ball);
        CHECK_NEAR(norm2(sub(next.omega, ball.center)), ball.radius, 1e-12);
    }
    CHECK_THROWS(NumericError, pga_update(st, {1.0, NAN}, ball));
    AdversaryState bad = st;
    bad.step_size = 0.0;
    CHECK_THROWS(ArgumentError, pga_update(bad, {0.0, 0.0}, ball));

    // random walks never escape the ball
    AdversaryState walk;
    walk.omega = ball.center;
    walk.step_size = 0.3;
    for (int i = 0; i < 200; ++i) {
        walk = pga_update(walk, random_vec(2, -3.0, 3.0), ball);
        CHECK(norm2(sub(walk.omega, ball.center)) <= ball.radius + 1e-12);
    }
    CHECK(walk.iteration == 200);
}

void radius() {
    {
        std::vector<Vec> same(5, Vec{0.4, -0.1});
        CHECK_NEAR(estimate_radius(same, 0.3), 0.3, 0.0);
    }
    {
        std::vector<Vec> pair{{-1.0}, {1.0}};
        CHECK_NEAR(estimate_radius(pair, 0.0), 1.0, 0.0);
    }
    CHECK_THROWS(ArgumentError, estimate_radius({}, 0.1));
    {
        // brute-force mean-deviation oracle on Gaussian draws
        std::vector<Vec> samples;
        for (int i = 0; i < 300; ++i) {
            Vec s(3);
            for (auto& v : s) v = 0.2 * rng.normal();
            samples.push_back(s);
        }
        Vec mean(3, 0.0);
        for (const auto& s : samples)
            for (int i = 0; i < 3; ++i) mean[i] += s[i] / 300.0;
        double dev = 0.0;
        for (const auto& s : samples) {
            double d2 = 0.0;
            for (int i = 0; i < 3; ++i)
                d2 += (s[i] - mean[i]) * (s[i] - mean[i]);
            dev += std::sqrt(d2) / 300.0;
        }
        CHECK_NEAR(estimate_radius(samples, 0.25), 0.25 + dev, 1e-12);
    }
}

// ascent sanity: with a frozen raw-action sequence on dubins1, repeated
// PGA steps must not lose loss overall
void ascent_smoke() {
    const EnvModel e = EnvModel::make(EnvKind::dubins1);
    const auto barriers = barriers_for(e, BarrierConfig{});
    const Vec x0{1.2, 3.2, 0.3};
    std::vector<Vec> u_seq;
    Rng policy(42);
    for (int k = 0; k < 15; ++k) {
        Vec u(3);
        for (auto& v : u) v = policy.uniform(-0.5, 1.5);
        u_seq.push_back(u);
    }
    AmbiguityBall ball{Vec(3, 0.0), 0.3};
    AdversaryState st;
    st.omega = Vec(3, 0.0);
    st.step_size = 0.02;
    const double gamma = 0.95;

    double first = 0.0, last = 0.0, best = -INFINITY;
    for (int it = 0; it <= 20; ++it) {
        const FrozenRollout r = roll(e, barriers, x0, u_seq, st.omega);
        REQUIRE(r.ok);
        const double loss = loss_from_trajectory(r.traj, gamma);
        if (it == 0) first = loss;
        last = loss;
        best = std::max(best, loss);
        if (it == 20) break;
        const Vec g = grad_loss_wrt_omega(r.traj, e, gamma);
        st = pga_update(st, g, ball);
    }
    CHECK(last >= first - 1e-9);
    CHECK(best > first);  // the adversary found something
    CHECK(st.iteration == 20);
}

}  // namespace

int main() {
    projection();
    loss();
    grad_trivial_cases();
    grad_fd_oracle(EnvKind::dubins1, 12);
    grad_fd_oracle(EnvKind::dubins2, 12);
    grad_fd_oracle(EnvKind::quad, 12);
    pga();
    radius();
    ascent_smoke();
    return harness::summary("adversary");
}
