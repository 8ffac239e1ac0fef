#include "dsrl/mlp.hpp"

#include <cmath>

#include <json.hpp>

#include "dsrl/kernels.hpp"

namespace dsrl {

OutputSpec OutputSpec::scaled_tanh(Vec lo_, Vec hi_) {
    OutputSpec s;
    s.kind = Kind::scaled_tanh;
    s.lo = std::move(lo_);
    s.hi = std::move(hi_);
    require(s.lo.size() == s.hi.size(), "scaled_tanh: bound sizes differ");
    for (std::size_t i = 0; i < s.lo.size(); ++i) {
        if (!std::isfinite(s.lo[i]) || !std::isfinite(s.hi[i]) ||
            !(s.lo[i] < s.hi[i]))
            throw ArgumentError("scaled_tanh: bounds must be finite with lo < hi");
    }
    return s;
}

std::size_t MLPParams::num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].data.size() + biases[l].size();
    return n;
}

void MLPParams::validate() const {
    require(layer_sizes.size() >= 2, "MLPParams: need at least two layers");
    require(weights.size() == layer_sizes.size() - 1 &&
                biases.size() == weights.size(),
            "MLPParams: layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        require(weights[l].rows == layer_sizes[l + 1] &&
                    weights[l].cols == layer_sizes[l],
                "MLPParams: weight shape mismatch");
        require(biases[l].size() == layer_sizes[l + 1],
                "MLPParams: bias shape mismatch");
        if (!all_finite(weights[l].data) || !all_finite(biases[l]))
            throw NumericError("MLPParams: non-finite parameter in layer " +
                               std::to_string(l));
    }
    if (output.kind == OutputSpec::Kind::scaled_tanh)
        require(output.lo.size() == layer_sizes.back(),
                "MLPParams: scaled_tanh bound size != output size");
}

MLPParams MLPParams::zeros(std::vector<std::size_t> sizes, Activation act,
                           OutputSpec out) {
    MLPParams p;
    p.layer_sizes = std::move(sizes);
    p.hidden_activation = act;
    p.output = std::move(out);
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        p.weights.emplace_back(p.layer_sizes[l + 1], p.layer_sizes[l]);
        p.biases.emplace_back(p.layer_sizes[l + 1], 0.0);
    }
    p.validate();
    return p;
}

MLPParams MLPParams::random(std::vector<std::size_t> sizes, Activation act,
                            OutputSpec out, Rng& rng) {
    MLPParams p = zeros(std::move(sizes), act, std::move(out));
    const std::size_t last = p.weights.size() - 1;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const double fan_in = static_cast<double>(p.layer_sizes[l]);
        const double fan_out = static_cast<double>(p.layer_sizes[l + 1]);
        // small final layer keeps initial actions/values near zero
        const double limit =
            (l == last) ? 3e-3 : std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& w : p.weights[l].data) w = rng.uniform(-limit, limit);
        for (auto& b : p.biases[l]) b = (l == last) ? rng.uniform(-limit, limit) : 0.0;
    }
    return p;
}

namespace {

double act_eval(Activation a, double z) {
    return a == Activation::tanh_act ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

double act_deriv(Activation a, double z) {
    if (a == Activation::tanh_act) {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    return z > 0.0 ? 1.0 : 0.0;
}

}  // namespace

ForwardResult mlp_forward(const MLPParams& params, const Vec& input) {
    require(input.size() == params.input_size(), "mlp_forward: input size mismatch");

    ForwardResult r;
    r.cache.input = input;
    const auto& ops = kernels::active();

    Vec a = input;
    const std::size_t L = params.num_layers();
    for (std::size_t l = 0; l < L; ++l) {
        const Matrix& w = params.weights[l];
        Vec z(w.rows);
        ops.matvec(w.data.data(), w.rows, w.cols, a.data(), z.data());
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += params.biases[l][i];
        r.cache.pre.push_back(z);

        if (l + 1 < L) {
            for (auto& v : z) v = act_eval(params.hidden_activation, v);
        } else if (params.output.kind == OutputSpec::Kind::scaled_tanh) {
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double lo = params.output.lo[i], hi = params.output.hi[i];
                z[i] = lo + (hi - lo) * 0.5 * (std::tanh(z[i]) + 1.0);
            }
        }
        r.cache.post.push_back(z);
        a = std::move(z);
    }
    r.output = a;
    return r;
}

GradBundle GradBundle::zeros_like(const MLPParams& params) {
    GradBundle g;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        g.d_weights.emplace_back(params.weights[l].rows, params.weights[l].cols);
        g.d_biases.emplace_back(params.biases[l].size(), 0.0);
    }
    g.input_grad.assign(params.input_size(), 0.0);
    return g;
}

void GradBundle::accumulate(const GradBundle& other) {
    require(d_weights.size() == other.d_weights.size(),
            "GradBundle::accumulate: layer mismatch");
    const auto& ops = kernels::active();
    for (std::size_t l = 0; l < d_weights.size(); ++l) {
        ops.axpy(d_weights[l].data.data(), 1.0, other.d_weights[l].data.data(),
                 d_weights[l].data.size());
        ops.axpy(d_biases[l].data(), 1.0, other.d_biases[l].data(),
                 d_biases[l].size());
    }
    ops.axpy(input_grad.data(), 1.0, other.input_grad.data(), input_grad.size());
}

void GradBundle::scale(double s) {
    for (auto& w : d_weights)
        for (auto& x : w.data) x *= s;
    for (auto& b : d_biases)
        for (auto& x : b) x *= s;
    for (auto& x : input_grad) x *= s;
}

void mlp_backward_acc(const MLPParams& params, const ForwardCache& cache,
                      const Vec& upstream, GradBundle& acc) {
    const std::size_t L = params.num_layers();
    require(cache.pre.size() == L && cache.post.size() == L &&
                cache.input.size() == params.input_size(),
            "mlp_backward: stale cache");
    for (std::size_t l = 0; l < L; ++l)
        require(cache.pre[l].size() == params.layer_sizes[l + 1],
                "mlp_backward: stale cache");
    require(upstream.size() == params.output_size(),
            "mlp_backward: upstream size mismatch");
    require(acc.d_weights.size() == L && acc.input_grad.size() == params.input_size(),
            "mlp_backward: accumulator shape mismatch");

    const auto& ops = kernels::active();

    // delta = d(upstream . output)/d pre-activation of the current layer
    Vec delta = upstream;
    if (params.output.kind == OutputSpec::Kind::scaled_tanh) {
        const Vec& z = cache.pre[L - 1];
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double t = std::tanh(z[i]);
            delta[i] *= (params.output.hi[i] - params.output.lo[i]) * 0.5 *
                        (1.0 - t * t);
        }
    }

    for (std::size_t l = L; l-- > 0;) {
        const Vec& a_in = (l == 0) ? cache.input : cache.post[l - 1];
        ops.rank1_acc(acc.d_weights[l].data.data(), acc.d_weights[l].rows,
                      acc.d_weights[l].cols, delta.data(), a_in.data());
        ops.axpy(acc.d_biases[l].data(), 1.0, delta.data(), delta.size());

        Vec prev(params.layer_sizes[l]);
        ops.matvec_t(params.weights[l].data.data(), params.weights[l].rows,
                     params.weights[l].cols, delta.data(), prev.data());
        if (l == 0) {
            ops.axpy(acc.input_grad.data(), 1.0, prev.data(), prev.size());
        } else {
            const Vec& z = cache.pre[l - 1];
            for (std::size_t i = 0; i < prev.size(); ++i)
                prev[i] *= act_deriv(params.hidden_activation, z[i]);
            delta = std::move(prev);
        }
    }
}

GradBundle mlp_backward(const MLPParams& params, const ForwardCache& cache,
                        const Vec& upstream) {
    GradBundle g = GradBundle::zeros_like(params);
    mlp_backward_acc(params, cache, upstream, g);
    return g;
}

AdamState AdamState::zeros_like(const MLPParams& params) {
    AdamState s;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        s.m_w.emplace_back(params.weights[l].rows, params.weights[l].cols);
        s.v_w.emplace_back(params.weights[l].rows, params.weights[l].cols);
        s.m_b.emplace_back(params.biases[l].size(), 0.0);
        s.v_b.emplace_back(params.biases[l].size(), 0.0);
    }
    return s;
}

void adam_step(MLPParams& params, const GradBundle& grads, AdamState& state,
               double lr) {
    require(grads.d_weights.size() == params.num_layers() &&
                state.m_w.size() == params.num_layers(),
            "adam_step: shape mismatch");
    if (!(lr > 0.0)) throw ArgumentError("adam_step: lr must be positive");
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        if (!all_finite(grads.d_weights[l].data) || !all_finite(grads.d_biases[l]))
            throw NumericError("adam_step: non-finite gradient in layer " +
                               std::to_string(l));
    }

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++state.step;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    const auto& ops = kernels::active();
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        ops.adam_update(params.weights[l].data.data(), state.m_w[l].data.data(),
                        state.v_w[l].data.data(), grads.d_weights[l].data.data(),
                        params.weights[l].data.size(), lr, b1, b2, eps, bias1,
                        bias2);
        ops.adam_update(params.biases[l].data(), state.m_b[l].data(),
                        state.v_b[l].data(), grads.d_biases[l].data(),
                        params.biases[l].size(), lr, b1, b2, eps, bias1, bias2);
    }
}

std::string mlp_to_json(const MLPParams& params) {
    nlohmann::json j;
    j["layer_sizes"] = params.layer_sizes;
    j["hidden_activation"] =
        params.hidden_activation == Activation::tanh_act ? "tanh" : "relu";
    j["output"]["kind"] = params.output.kind == OutputSpec::Kind::scaled_tanh
                              ? "scaled_tanh"
                              : "identity";
    if (params.output.kind == OutputSpec::Kind::scaled_tanh) {
        j["output"]["lo"] = params.output.lo;
        j["output"]["hi"] = params.output.hi;
    }
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        j["weights"].push_back(params.weights[l].data);
        j["biases"].push_back(params.biases[l]);
    }
    return j.dump();
}

MLPParams mlp_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    MLPParams p;
    p.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    const std::string act = j.at("hidden_activation").get<std::string>();
    if (act == "tanh")
        p.hidden_activation = Activation::tanh_act;
    else if (act == "relu")
        p.hidden_activation = Activation::relu;
    else
        throw ConfigError("mlp_from_json: unknown activation '" + act + "'");

    const std::string kind = j.at("output").at("kind").get<std::string>();
    if (kind == "scaled_tanh") {
        p.output = OutputSpec::scaled_tanh(j.at("output").at("lo").get<Vec>(),
                                           j.at("output").at("hi").get<Vec>());
    } else if (kind == "identity") {
        p.output = OutputSpec::identity();
    } else {
        throw ConfigError("mlp_from_json: unknown output kind '" + kind + "'");
    }

    const auto& jw = j.at("weights");
    const auto& jb = j.at("biases");
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        Matrix w(p.layer_sizes[l + 1], p.layer_sizes[l]);
        w.data = jw.at(l).get<Vec>();
        require(w.data.size() == w.rows * w.cols, "mlp_from_json: weight size");
        p.weights.push_back(std::move(w));
        p.biases.push_back(jb.at(l).get<Vec>());
    }
    p.validate();
    return p;
}

}  // namespace dsrl
