#include "dsrl/ddpg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace dsrl {

namespace {

Vec concat(const Vec& a, const Vec& b) {
    Vec out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

void clamp_to_box(Vec& u, const Vec& lo, const Vec& hi) {
    for (std::size_t i = 0; i < u.size(); ++i)
        u[i] = std::min(std::max(u[i], lo[i]), hi[i]);
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) {
    if (capacity == 0)
        throw ArgumentError("ReplayBuffer: capacity must be positive");
    ring_.resize(capacity);
}

void ReplayBuffer::push(Transition t) {
    ring_[cursor_] = std::move(t);
    cursor_ += 1;
    if (cursor_ == ring_.size()) {
        cursor_ = 0;
        full_ = true;
    }
}

const Transition& ReplayBuffer::sample(Rng& rng) const {
    if (size() == 0) throw ArgumentError("ReplayBuffer::sample: buffer is empty");
    return ring_[rng.uniform_index(size())];
}

std::vector<const Transition*> ReplayBuffer::sample_batch(
    Rng& rng, std::size_t batch) const {
    if (batch == 0)
        throw ArgumentError("ReplayBuffer::sample_batch: batch must be positive");
    std::vector<const Transition*> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(&sample(rng));
    return out;
}

Vec ReplayBuffer::omega0_mean() const {
    if (size() == 0)
        throw ArgumentError("ReplayBuffer::omega0_mean: buffer is empty");
    Vec mean(ring_[0].omega0.size(), 0.0);
    const std::size_t count = size();
    for (std::size_t i = 0; i < count; ++i) {
        const Vec& w = ring_[i].omega0;
        require(w.size() == mean.size(), "ReplayBuffer: omega0 size drift");
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += w[j];
    }
    for (double& v : mean) v /= static_cast<double>(count);
    return mean;
}

OUNoise::OUNoise(std::size_t dim, double theta_, double sigma_)
    : theta(theta_), sigma(sigma_), mu(dim, 0.0), state(dim, 0.0) {
    if (!std::isfinite(theta) || theta < 0.0)
        throw ArgumentError("OUNoise: theta must be >= 0");
    if (!std::isfinite(sigma) || sigma < 0.0)
        throw ArgumentError("OUNoise: sigma must be >= 0");
}

void OUNoise::reset() { state = mu; }

const Vec& OUNoise::sample(Rng& rng) {
    for (std::size_t i = 0; i < state.size(); ++i)
        state[i] += theta * (mu[i] - state[i]) + sigma * rng.normal();
    return state;
}

AgentNets AgentNets::make(const EnvModel& env,
                          const std::vector<std::size_t>& hidden, Rng& rng) {
    if (hidden.empty())
        throw ArgumentError("AgentNets::make: need at least one hidden layer");
    std::vector<std::size_t> actor_sizes{env.n};
    actor_sizes.insert(actor_sizes.end(), hidden.begin(), hidden.end());
    actor_sizes.push_back(env.m);
    std::vector<std::size_t> critic_sizes{env.n + env.m};
    critic_sizes.insert(critic_sizes.end(), hidden.begin(), hidden.end());
    critic_sizes.push_back(1);

    AgentNets nets;
    nets.actor = MLPParams::random(actor_sizes, Activation::tanh_act,
                                   OutputSpec::scaled_tanh(env.u_lo, env.u_hi),
                                   rng);
    nets.critic = MLPParams::random(critic_sizes, Activation::relu,
                                    OutputSpec::identity(), rng);
    nets.target_actor = nets.actor;
    nets.target_critic = nets.critic;
    nets.actor_opt = AdamState::zeros_like(nets.actor);
    nets.critic_opt = AdamState::zeros_like(nets.critic);
    return nets;
}

Vec select_action(const AgentNets& nets, const EnvModel& env, const Vec& x,
                  OUNoise& noise, Rng& rng, bool explore) {
    Vec u = mlp_forward(nets.actor, x).output;
    if (explore) {
        const Vec& xi = noise.sample(rng);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] += xi[i];
    }
    clamp_to_box(u, env.u_lo, env.u_hi);
    return u;
}

double critic_target(const AgentNets& nets, const EnvModel& env,
                     const Transition& t) {
    if (env.goal_reached(t.s_next)) return t.reward;
    const Vec a_next = mlp_forward(nets.target_actor, t.s_next).output;
    const Vec q = mlp_forward(nets.target_critic, concat(t.s_next, a_next)).output;
    return t.reward + nets.gamma * q[0];
}

double update_critic(AgentNets& nets, const EnvModel& env,
                     const std::vector<const Transition*>& batch, double lr,
                     bool use_rectified) {
    if (batch.empty()) throw ArgumentError("update_critic: empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    GradBundle grads = GradBundle::zeros_like(nets.critic);
    double loss = 0.0;
    Vec upstream(1);
    for (const Transition* t : batch) {
        const double y = critic_target(nets, env, *t);
        const Vec& a = use_rectified ? t->a_rect : t->a;
        ForwardResult fr = mlp_forward(nets.critic, concat(t->s, a));
        const double diff = fr.output[0] - y;
        loss += diff * diff * inv_n;
        upstream[0] = 2.0 * diff * inv_n;
        mlp_backward_acc(nets.critic, fr.cache, upstream, grads);
    }
    adam_step(nets.critic, grads, nets.critic_opt, lr);
    return loss;
}

double update_actor(AgentNets& nets,
                    const std::vector<const Transition*>& batch, double lr) {
    if (batch.empty()) throw ArgumentError("update_actor: empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const std::size_t m = nets.actor.output_size();
    GradBundle grads = GradBundle::zeros_like(nets.actor);
    double objective = 0.0;
    const Vec q_upstream(1, 1.0);
    for (const Transition* t : batch) {
        ForwardResult actor_fr = mlp_forward(nets.actor, t->s);
        ForwardResult critic_fr =
            mlp_forward(nets.critic, concat(t->s, actor_fr.output));
        objective += critic_fr.output[0] * inv_n;
        // dQ/da is the action block of the critic's input gradient; feed it
        // back negated so Adam's descent direction is policy ascent
        GradBundle critic_g =
            mlp_backward(nets.critic, critic_fr.cache, q_upstream);
        Vec da(critic_g.input_grad.end() - static_cast<std::ptrdiff_t>(m),
               critic_g.input_grad.end());
        for (double& v : da) v *= -inv_n;
        mlp_backward_acc(nets.actor, actor_fr.cache, da, grads);
    }
    adam_step(nets.actor, grads, nets.actor_opt, lr);
    return objective;
}

void soft_update(AgentNets& nets) {
    const double tau = nets.tau;
    auto blend = [tau](MLPParams& tgt, const MLPParams& src) {
        for (std::size_t l = 0; l < src.num_layers(); ++l) {
            double* t = tgt.weights[l].data.data();
            const double* s = src.weights[l].data.data();
            for (std::size_t i = 0; i < src.weights[l].data.size(); ++i)
                t[i] = tau * s[i] + (1.0 - tau) * t[i];
            double* tb = tgt.biases[l].data();
            const double* sb = src.biases[l].data();
            for (std::size_t i = 0; i < src.biases[l].size(); ++i)
                tb[i] = tau * sb[i] + (1.0 - tau) * tb[i];
        }
    };
    blend(nets.target_actor, nets.actor);
    blend(nets.target_critic, nets.critic);
}

const char* rollout_mode_name(RolloutMode mode) {
    switch (mode) {
        case RolloutMode::dsrl: return "dsrl";
        case RolloutMode::baseline: return "baseline";
        case RolloutMode::eval: return "eval";
    }
    throw ArgumentError("rollout_mode_name: unknown mode");
}

Vec NoisePrior::draw(Rng& rng) const {
    validate();
    if (kind == Kind::uniform) {
        Vec w(lo.size());
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = rng.uniform(lo[i], hi[i]);
        return w;
    }
    Vec w(mean.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = mean[i] + sigma[i] * rng.normal();
    return w;
}

Vec NoisePrior::center() const {
    validate();
    if (kind == Kind::uniform) {
        Vec c(lo.size());
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (lo[i] + hi[i]);
        return c;
    }
    return mean;
}

void NoisePrior::validate() const {
    if (samples_per_step == 0)
        throw ArgumentError("NoisePrior: samples_per_step must be positive");
    if (kind == Kind::uniform) {
        if (lo.empty() || lo.size() != hi.size())
            throw ArgumentError("NoisePrior: lo and hi must match and be non-empty");
        for (std::size_t i = 0; i < lo.size(); ++i) {
            if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || lo[i] > hi[i])
                throw ArgumentError("NoisePrior: need finite lo <= hi");
        }
        return;
    }
    if (mean.empty() || mean.size() != sigma.size())
        throw ArgumentError("NoisePrior: mean and sigma must match and be non-empty");
    for (double s : sigma) {
        if (!(s >= 0.0) || !std::isfinite(s))
            throw ArgumentError("NoisePrior: sigma must be finite and >= 0");
    }
}

namespace {

// one filtered step: rows -> QP -> (fallback) -> integrate -> record.
// Returns false when a numeric error ended the episode.
bool filtered_step(const AgentNets&, const EnvModel& env,
                   const std::vector<BarrierSpec>& barriers, const Vec& x,
                   const Vec& a, const Vec& omega_asm, const Vec& omega_exec,
                   bool record_jacobian, EpisodeResult& out, Vec& x_next_out) {
    Trajectory& traj = out.traj;
    try {
        std::vector<SafetyRow> rows;
        rows.reserve(barriers.size());
        for (const BarrierSpec& b : barriers) rows.push_back(cbf_row(b, env, x));

        const SafetyQP sqp =
            assemble_safety_qp(a, env.u_lo, env.u_hi, rows, omega_asm);
        const QPSolution sol = solve_qp(sqp.qp);

        Vec u_r;
        Matrix jac(env.m, env.n);
        if (sol.status == QPStatus::optimal) {
            u_r = sol.z_star;
            if (record_jacobian) {
                try {
                    jac = du_domega(sqp, sol);
                } catch (const DegeneracyError&) {
                    // active set genuinely ambiguous even after the nudge
                    // retry: record a zero sensitivity
                }
            }
        } else {
            u_r = fallback_action(rows, env.u_lo, env.u_hi, omega_asm);
            traj.fallback_count += 1;
        }

        const Vec x_next = env.step(x, u_r, omega_exec);
        const double r = env.reward(x_next, u_r);
        double h_min = std::numeric_limits<double>::infinity();
        for (const BarrierSpec& b : barriers)
            h_min = std::min(h_min, b.h(x_next));

        traj.actions_rl.push_back(a);
        traj.actions_rect.push_back(u_r);
        traj.rewards.push_back(r);
        traj.omega0_samples.push_back(omega_asm);
        traj.h_min.push_back(h_min);
        traj.states.push_back(x_next);
        if (record_jacobian) traj.jacobians.push_back(jac);

        out.transitions.push_back({x, a, u_r, r, x_next, omega_exec});
        x_next_out = x_next;
        return true;
    } catch (const NumericError& e) {
        out.aborted = true;
        out.error = e.what();
        return false;
    }
}

}  // namespace

EpisodeResult run_episode(const AgentNets& nets, const EnvModel& env,
                          const std::vector<BarrierSpec>& barriers,
                          const Vec& omega_adv, const NoisePrior& prior,
                          RolloutMode mode, OUNoise& noise, Rng& rng) {
    require(omega_adv.size() == env.n, "run_episode: omega size mismatch");
    require(!barriers.empty(), "run_episode: no barriers");
    prior.validate();
    const Vec prior_center = prior.center();
    require(prior_center.size() == env.n, "run_episode: prior dim mismatch");

    EpisodeResult out;
    const bool training = mode != RolloutMode::eval;

    noise.reset();
    const Vec omega_exec = training ? prior.draw(rng) : omega_adv;
    out.traj.omega_executed = omega_exec;

    Vec x = env.x0;
    out.traj.states.push_back(x);

    for (std::size_t k = 0; k < env.horizon; ++k) {
        if (env.goal_reached(x)) break;
        Vec a;
        try {
            a = select_action(nets, env, x, noise, rng, training);
        } catch (const NumericError& e) {
            out.aborted = true;
            out.error = e.what();
            break;
        }

        Vec omega_asm;
        if (mode == RolloutMode::eval) {
            omega_asm = omega_adv;
        } else {
            // expectation over the prior via a per-step sample mean,
            // centered on the adversary iterate (baseline stays at the
            // prior mean)
            Vec mean_s(env.n, 0.0);
            for (std::size_t s = 0; s < prior.samples_per_step; ++s) {
                const Vec w = prior.draw(rng);
                for (std::size_t j = 0; j < mean_s.size(); ++j)
                    mean_s[j] += w[j];
            }
            const Vec& base =
                (mode == RolloutMode::dsrl) ? omega_adv : prior_center;
            omega_asm.resize(env.n);
            for (std::size_t j = 0; j < env.n; ++j)
                omega_asm[j] =
                    base[j] +
                    mean_s[j] / static_cast<double>(prior.samples_per_step) -
                    prior_center[j];
        }

        Vec x_next;
        if (!filtered_step(nets, env, barriers, x, a, omega_asm, omega_exec,
                           mode == RolloutMode::dsrl, out, x_next))
            break;
        x = std::move(x_next);
    }
    return out;
}

EpisodeResult run_eval_episode(const AgentNets& nets, const EnvModel& env,
                               const std::vector<BarrierSpec>& barriers,
                               const Vec& omega_exec, const Vec& omega_asm) {
    require(omega_exec.size() == env.n && omega_asm.size() == env.n,
            "run_eval_episode: omega size mismatch");
    require(!barriers.empty(), "run_eval_episode: no barriers");

    EpisodeResult out;
    out.traj.omega_executed = omega_exec;
    Vec x = env.x0;
    out.traj.states.push_back(x);

    for (std::size_t k = 0; k < env.horizon; ++k) {
        if (env.goal_reached(x)) break;
        Vec a;
        try {
            a = mlp_forward(nets.actor, x).output;
        } catch (const NumericError& e) {
            out.aborted = true;
            out.error = e.what();
            break;
        }
        clamp_to_box(a, env.u_lo, env.u_hi);
        Vec x_next;
        if (!filtered_step(nets, env, barriers, x, a, omega_asm, omega_exec,
                           false, out, x_next))
            break;
        x = std::move(x_next);
    }
    return out;
}

TrainResult train(const EnvModel& env, const std::vector<BarrierSpec>& barriers,
                  const NoisePrior& prior, const TrainOptions& opts,
                  RolloutMode mode, const EpisodeSink& sink) {
    if (mode == RolloutMode::eval)
        throw ArgumentError("train: mode must be dsrl or baseline");
    if (opts.episodes == 0) throw ArgumentError("train: episodes must be positive");
    if (opts.batch_size == 0)
        throw ArgumentError("train: batch_size must be positive");
    if (!(opts.tau > 0.0 && opts.tau <= 1.0))
        throw ArgumentError("train: tau must be in (0, 1]");
    if (!(opts.gamma > 0.0 && opts.gamma <= 1.0))
        throw ArgumentError("train: gamma must be in (0, 1]");
    prior.validate();

    Rng rng(opts.seed);
    TrainResult res;
    res.nets = AgentNets::make(env, opts.hidden, rng);
    res.nets.tau = opts.tau;
    res.nets.gamma = opts.gamma;
    res.ball = AmbiguityBall{prior.center(), opts.radius};
    res.ball.validate();
    res.adversary = AdversaryState{prior.center(), opts.adversary_step, 0};

    ReplayBuffer buffer(opts.buffer_capacity);
    OUNoise noise(env.m, opts.ou_theta, opts.ou_sigma);

    for (std::size_t ep = 0; ep < opts.episodes; ++ep) {
        EpisodeResult er = run_episode(res.nets, env, barriers,
                                       res.adversary.omega, prior, mode, noise,
                                       rng);
        if (er.aborted) {
            res.failed = true;
            res.error = "episode " + std::to_string(ep + 1) + ": " + er.error;
            return res;
        }
        for (Transition& t : er.transitions) buffer.push(std::move(t));

        try {
            // one critic + actor + target update per environment step, once
            // the buffer can fill a batch
            const std::size_t steps = er.traj.length();
            for (std::size_t i = 0; i < steps; ++i) {
                if (buffer.size() < opts.batch_size) break;
                const auto batch = buffer.sample_batch(rng, opts.batch_size);
                update_critic(res.nets, env, batch, opts.critic_lr,
                              opts.critic_uses_rectified);
                update_actor(res.nets, batch, opts.actor_lr);
                soft_update(res.nets);
            }

            const double loss = loss_from_trajectory(er.traj, opts.gamma);
            if (mode == RolloutMode::dsrl && er.traj.length() > 0) {
                res.ball.center = buffer.omega0_mean();
                if (opts.estimate_radius_from_buffer) {
                    std::vector<Vec> draws;
                    draws.reserve(buffer.size());
                    for (std::size_t i = 0; i < buffer.size(); ++i)
                        draws.push_back(buffer.at(i).omega0);
                    res.ball.radius =
                        estimate_radius(draws, opts.wasserstein_rho);
                }
                const Vec g = grad_loss_wrt_omega(er.traj, env, opts.gamma);
                res.adversary = pga_update(res.adversary, g, res.ball);
                res.adversary.step_size *= opts.adversary_decay;
            }

            EpisodeMetrics m;
            m.episode = ep + 1;
            m.episode_return = 0.0;
            for (double r : er.traj.rewards) m.episode_return += r;
            m.adversary_loss = loss;
            m.min_h = std::numeric_limits<double>::infinity();
            for (double h : er.traj.h_min) m.min_h = std::min(m.min_h, h);
            if (er.traj.h_min.empty()) {
                for (const BarrierSpec& b : barriers)
                    m.min_h = std::min(m.min_h, b.h(er.traj.states.back()));
            }
            m.omega = res.adversary.omega;
            m.fallback_count = er.traj.fallback_count;
            m.steps = er.traj.length();
            m.goal = env.goal_reached(er.traj.states.back());
            res.metrics.push_back(m);
            if (sink) sink(m, er.traj, res);
        } catch (const NumericError& e) {
            res.failed = true;
            res.error =
                "episode " + std::to_string(ep + 1) + " update: " + e.what();
            return res;
        }
    }
    return res;
}

}  // namespace dsrl
