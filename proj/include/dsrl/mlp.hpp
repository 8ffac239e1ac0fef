#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dsrl/common.hpp"
#include "dsrl/matrix.hpp"

namespace dsrl {

enum class Activation { tanh_act, relu };

// Output head: raw affine output, or a per-channel squash into (lo, hi) so
// actor outputs always respect the action box.
struct OutputSpec {
    enum class Kind { identity, scaled_tanh } kind = Kind::identity;
    Vec lo, hi;  // scaled_tanh only; per output channel

    static OutputSpec identity() { return {}; }
    static OutputSpec scaled_tanh(Vec lo, Vec hi);
};

struct MLPParams {
    std::vector<std::size_t> layer_sizes;  // [in, hidden..., out]
    std::vector<Matrix> weights;           // weights[l]: sizes[l+1] x sizes[l]
    std::vector<Vec> biases;               // biases[l]: sizes[l+1]
    Activation hidden_activation = Activation::tanh_act;
    OutputSpec output;

    std::size_t num_layers() const { return weights.size(); }
    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }

    std::size_t num_params() const;
    void validate() const;

    /// Zero-initialized net of the given shape.
    static MLPParams zeros(std::vector<std::size_t> sizes, Activation act,
                           OutputSpec out);
    /// Xavier-uniform hidden layers; final layer uniform in ±3e-3.
    static MLPParams random(std::vector<std::size_t> sizes, Activation act,
                            OutputSpec out, Rng& rng);
};

struct ForwardCache {
    Vec input;
    std::vector<Vec> pre;   // pre-activation per layer
    std::vector<Vec> post;  // post-activation per layer (last = net output)
};

struct ForwardResult {
    Vec output;
    ForwardCache cache;
};

ForwardResult mlp_forward(const MLPParams& params, const Vec& input);

/// Gradients of (upstream . output) with respect to every parameter and the
/// input, mirroring the source params layer by layer.
struct GradBundle {
    std::vector<Matrix> d_weights;
    std::vector<Vec> d_biases;
    Vec input_grad;

    static GradBundle zeros_like(const MLPParams& params);
    void accumulate(const GradBundle& other);
    void scale(double s);
};

GradBundle mlp_backward(const MLPParams& params, const ForwardCache& cache,
                        const Vec& upstream);

/// Same, but adds the gradients into an existing zeros_like-shaped bundle —
/// the minibatch accumulation path, which skips per-sample allocation.
void mlp_backward_acc(const MLPParams& params, const ForwardCache& cache,
                      const Vec& upstream, GradBundle& acc);

struct AdamState {
    std::vector<Matrix> m_w, v_w;
    std::vector<Vec> m_b, v_b;
    long step = 0;

    static AdamState zeros_like(const MLPParams& params);
};

/// One Adam step (beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected).
/// Throws NumericError naming the layer if a gradient is non-finite.
void adam_step(MLPParams& params, const GradBundle& grads, AdamState& state,
               double lr);

std::string mlp_to_json(const MLPParams& params);
MLPParams mlp_from_json(const std::string& text);

}  // namespace dsrl
