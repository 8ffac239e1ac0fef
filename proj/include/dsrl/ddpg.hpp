#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsrl/adversary.hpp"
#include "dsrl/cbf.hpp"
#include "dsrl/env.hpp"
#include "dsrl/mlp.hpp"

namespace dsrl {

// Replay entry. Stores both the policy's raw action and the rectified one
// actually executed, plus the episode noise, so a stored transition
// re-simulates exactly: s_next == step(s, a_rect, omega0).
struct Transition {
    Vec s;
    Vec a;       // raw actor output (post exploration noise, pre filter)
    Vec a_rect;  // filtered action that was executed
    double reward = 0.0;
    Vec s_next;
    Vec omega0;  // the episode's executed noise draw
};

// Fixed-capacity ring. push overwrites the oldest entry once full; sampling
// is uniform over whatever is currently stored.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    const Transition& sample(Rng& rng) const;
    std::vector<const Transition*> sample_batch(Rng& rng,
                                                std::size_t batch) const;

    std::size_t size() const { return full_ ? ring_.size() : cursor_; }
    std::size_t capacity() const { return ring_.size(); }
    const Transition& at(std::size_t i) const { return ring_[i]; }

    /// Mean of the stored omega0 draws (ambiguity-ball center estimate).
    Vec omega0_mean() const;

private:
    std::vector<Transition> ring_;
    std::size_t cursor_ = 0;
    bool full_ = false;
};

// Ornstein-Uhlenbeck exploration noise: x += theta (mu - x) + sigma xi.
// theta = 0 degenerates to a Gaussian random walk.
struct OUNoise {
    double theta = 0.15;
    double sigma = 0.2;
    Vec mu;
    Vec state;

    explicit OUNoise(std::size_t dim, double theta_ = 0.15,
                     double sigma_ = 0.2);
    void reset();
    const Vec& sample(Rng& rng);
};

// Actor mu(s) -> action (tanh-squashed into the control box), critic
// Q(s, a) -> scalar, plus Polyak-tracked target copies of both.
struct AgentNets {
    MLPParams actor, critic;
    MLPParams target_actor, target_critic;
    AdamState actor_opt, critic_opt;
    double tau = 0.005;
    double gamma = 0.99;

    static AgentNets make(const EnvModel& env,
                          const std::vector<std::size_t>& hidden, Rng& rng);
};

/// Actor forward plus one OU draw, clamped to the control box. explore=false
/// skips the noise entirely (and leaves the rng untouched), giving the
/// deterministic greedy action.
Vec select_action(const AgentNets& nets, const EnvModel& env, const Vec& x,
                  OUNoise& noise, Rng& rng, bool explore);

/// Bellman backup through the target nets: y = R + gamma Q'(s', mu'(s')),
/// except y = R when s' satisfies the goal test (episode would have ended).
double critic_target(const AgentNets& nets, const EnvModel& env,
                     const Transition& t);

/// One Adam step on the minibatch MSE sum_i (Q(s_i, a_i) - y_i)^2 / N.
/// use_rectified picks a_rect (the default — the critic sees the action that
/// actually produced the reward) over the raw a. Returns the pre-step loss.
double update_critic(AgentNets& nets, const EnvModel& env,
                     const std::vector<const Transition*>& batch, double lr,
                     bool use_rectified);

/// Deterministic policy gradient ascent on J = mean_i Q(s_i, mu(s_i)) with
/// the critic frozen. Returns the pre-step J.
double update_actor(AgentNets& nets,
                    const std::vector<const Transition*>& batch, double lr);

/// Polyak averaging of both target nets: p' = tau p + (1 - tau) p'.
void soft_update(AgentNets& nets);

// How a rollout treats noise.
//   dsrl:     executed noise = fresh episode draw from the prior; QP rows
//             assembled at omega_adv shifted by the per-step sample-mean
//             offset; records du/domega for the adversary sweep.
//   baseline: same, but assembly pins omega_adv at the prior mean and no
//             Jacobians are recorded.
//   eval:     exploration off, executed == assembly == omega_adv exactly,
//             no prior draws.
enum class RolloutMode { dsrl, baseline, eval };

const char* rollout_mode_name(RolloutMode mode);

// Per-step dynamics-noise prior: independent Gaussian channels, or a
// uniform box.
struct NoisePrior {
    enum class Kind { gaussian, uniform };
    Kind kind = Kind::gaussian;
    Vec mean, sigma;  // gaussian
    Vec lo, hi;       // uniform
    std::size_t samples_per_step = 8;

    Vec draw(Rng& rng) const;
    Vec center() const;  // distribution mean
    void validate() const;

    bool operator==(const NoisePrior&) const = default;
};

struct EpisodeResult {
    Trajectory traj;
    std::vector<Transition> transitions;
    bool aborted = false;   // numeric failure mid-episode; traj is partial
    std::string error;
};

/// One full episode: per step select_action -> barrier rows -> safety QP ->
/// execute. Ends at the horizon or on goal_reached. Throws nothing; numeric
/// failures mark the result aborted instead.
EpisodeResult run_episode(const AgentNets& nets, const EnvModel& env,
                          const std::vector<BarrierSpec>& barriers,
                          const Vec& omega_adv, const NoisePrior& prior,
                          RolloutMode mode, OUNoise& noise, Rng& rng);

/// Deterministic greedy rollout with the executed noise and the QP-assembly
/// noise supplied separately. A policy deployed against noise it did not
/// anticipate is exactly this call with the two vectors differing; the usual
/// worst-case evaluation passes the same vector twice.
EpisodeResult run_eval_episode(const AgentNets& nets, const EnvModel& env,
                               const std::vector<BarrierSpec>& barriers,
                               const Vec& omega_exec, const Vec& omega_asm);

struct TrainOptions {
    std::size_t episodes = 300;
    std::size_t batch_size = 64;
    std::size_t buffer_capacity = 100000;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double tau = 0.005;
    double gamma = 0.99;
    std::vector<std::size_t> hidden{64, 64};
    double ou_theta = 0.15;
    double ou_sigma = 0.2;
    bool critic_uses_rectified = true;

    double adversary_step = 0.01;
    double adversary_decay = 0.999;   // multiplicative per-episode step decay
    double radius = 0.5;              // ambiguity-ball radius rho_d
    bool estimate_radius_from_buffer = false;
    double wasserstein_rho = 0.0;     // additive slack for the estimator

    std::uint64_t seed = 1;

    bool operator==(const TrainOptions&) const = default;
};

struct EpisodeMetrics {
    std::size_t episode = 0;   // 1-based
    double episode_return = 0.0;
    double adversary_loss = 0.0;
    double min_h = 0.0;
    Vec omega;                 // adversary iterate after this episode's update
    int fallback_count = 0;
    std::size_t steps = 0;
    bool goal = false;
};

struct TrainResult {
    AgentNets nets;
    AdversaryState adversary;
    AmbiguityBall ball;
    std::vector<EpisodeMetrics> metrics;
    bool failed = false;
    std::string error;
};

/// Episode callback: metrics plus the episode's trajectory (for periodic
/// CSV dumps / checkpoints). Called after the adversary update.
using EpisodeSink =
    std::function<void(const EpisodeMetrics&, const Trajectory&,
                       const TrainResult& partial)>;

/// Full training loop: for each episode, run_episode, then one critic +
/// actor + soft update per environment step taken (gated on the buffer
/// holding a full batch), then the end-of-episode ambiguity-ball re-estimate
/// and projected-gradient adversary update (dsrl mode only; baseline keeps
/// omega at the prior mean). A numeric failure stops training and returns
/// what exists with failed set.
TrainResult train(const EnvModel& env, const std::vector<BarrierSpec>& barriers,
                  const NoisePrior& prior, const TrainOptions& opts,
                  RolloutMode mode, const EpisodeSink& sink = nullptr);

}  // namespace dsrl
