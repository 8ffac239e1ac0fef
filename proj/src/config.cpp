#include "dsrl/config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dsrl {

namespace {

[[noreturn]] void fail_at(std::size_t line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// '#' starts a comment unless it sits inside a quoted string.
std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_str = !in_str;
        else if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

bool parse_number(const std::string& tok, double& out) {
    if (tok.empty()) return false;
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) return false;
    out = v;
    return true;
}

bool looks_integral(const std::string& tok) {
    std::size_t i = (tok[0] == '+' || tok[0] == '-') ? 1 : 0;
    if (i >= tok.size()) return false;
    for (; i < tok.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return false;
    return true;
}

struct Value {
    enum class Kind { string, boolean, number, array };
    Kind kind = Kind::number;
    std::string str;
    bool b = false;
    double num = 0.0;
    bool is_int = false;
    long long i = 0;
    std::vector<double> arr;
    std::size_t line = 0;
};

Value parse_value(const std::string& raw, std::size_t line) {
    Value v;
    v.line = line;
    if (raw.empty()) fail_at(line, "missing value");
    if (raw.front() == '"') {
        auto close = raw.find('"', 1);
        if (close == std::string::npos) fail_at(line, "unterminated string");
        if (!trim(raw.substr(close + 1)).empty())
            fail_at(line, "trailing characters after string value");
        v.kind = Value::Kind::string;
        v.str = raw.substr(1, close - 1);
        return v;
    }
    if (raw == "true" || raw == "false") {
        v.kind = Value::Kind::boolean;
        v.b = (raw == "true");
        return v;
    }
    if (raw.front() == '[') {
        if (raw.back() != ']') fail_at(line, "unterminated array");
        v.kind = Value::Kind::array;
        std::string inner = trim(raw.substr(1, raw.size() - 2));
        if (inner.empty()) return v;
        std::size_t pos = 0;
        while (true) {
            auto comma = inner.find(',', pos);
            std::string tok = trim(inner.substr(pos, comma - pos));
            double x;
            if (!parse_number(tok, x))
                fail_at(line, "array entries must be numbers, got '" + tok + "'");
            v.arr.push_back(x);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return v;
    }
    if (!parse_number(raw, v.num))
        fail_at(line, "cannot parse value '" + raw + "'");
    v.kind = Value::Kind::number;
    v.is_int = looks_integral(raw);
    if (v.is_int) {
        errno = 0;
        v.i = std::strtoll(raw.c_str(), nullptr, 10);
        if (errno == ERANGE) fail_at(line, "integer out of range: '" + raw + "'");
    }
    return v;
}

const std::set<std::string> kSections = {
    "run", "env", "cbf", "noise", "ambiguity", "ddpg", "adversary"};

// Flat "section.key" -> Value store with used-key tracking, so one sweep at
// the end reports every typo'd key with its line number.
struct Reader {
    std::map<std::string, Value> vals;
    std::set<std::string> used;

    static std::string pretty(const std::string& full) {
        auto dot = full.find('.');
        return "[" + full.substr(0, dot) + "]." + full.substr(dot + 1);
    }

    bool had(const std::string& full) const { return vals.count(full) != 0; }

    const Value* get(const std::string& full) {
        auto it = vals.find(full);
        if (it == vals.end()) return nullptr;
        used.insert(full);
        return &it->second;
    }

    void num(const std::string& full, double& out) {
        if (const Value* v = get(full)) {
            if (v->kind != Value::Kind::number)
                fail_at(v->line, pretty(full) + " must be a number");
            out = v->num;
        }
    }

    void integer(const std::string& full, std::size_t& out) {
        if (const Value* v = get(full)) {
            if (v->kind != Value::Kind::number || !v->is_int || v->i < 0)
                fail_at(v->line, pretty(full) + " must be a nonnegative integer");
            out = static_cast<std::size_t>(v->i);
        }
    }

    void u64(const std::string& full, std::uint64_t& out) {
        std::size_t tmp = static_cast<std::size_t>(out);
        integer(full, tmp);
        out = tmp;
    }

    void str(const std::string& full, std::string& out) {
        if (const Value* v = get(full)) {
            if (v->kind != Value::Kind::string)
                fail_at(v->line, pretty(full) + " must be a string");
            out = v->str;
        }
    }

    void flag(const std::string& full, bool& out) {
        if (const Value* v = get(full)) {
            if (v->kind != Value::Kind::boolean)
                fail_at(v->line, pretty(full) + " must be true or false");
            out = v->b;
        }
    }

    void vec(const std::string& full, Vec& out) {
        if (const Value* v = get(full)) {
            if (v->kind != Value::Kind::array)
                fail_at(v->line, pretty(full) + " must be an array of numbers");
            out = v->arr;
        }
    }

    void sizes(const std::string& full, std::vector<std::size_t>& out) {
        if (const Value* v = get(full)) {
            if (v->kind != Value::Kind::array)
                fail_at(v->line, pretty(full) + " must be an array of integers");
            std::vector<std::size_t> tmp;
            for (double x : v->arr) {
                if (!(x >= 1) || x != std::floor(x) || x > 1e9)
                    fail_at(v->line, pretty(full) + " entries must be positive integers");
                tmp.push_back(static_cast<std::size_t>(x));
            }
            out = std::move(tmp);
        }
    }

    void finish() const {
        for (const auto& [full, v] : vals)
            if (!used.count(full))
                fail_at(v.line, "unknown key " + pretty(full));
    }
};

Reader lex(const std::string& text) {
    Reader r;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail_at(lineno, "malformed section header");
            std::string name = trim(line.substr(1, line.size() - 2));
            if (!kSections.count(name))
                fail_at(lineno, "unknown section [" + name + "]");
            section = name;
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) fail_at(lineno, "expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string valraw = trim(line.substr(eq + 1));
        if (key.empty()) fail_at(lineno, "empty key");
        if (section.empty()) fail_at(lineno, "key '" + key + "' outside any section");
        std::string full = section + "." + key;
        if (r.vals.count(full))
            fail_at(lineno, "duplicate key " + Reader::pretty(full));
        r.vals.emplace(full, parse_value(valraw, lineno));
    }
    return r;
}

}  // namespace

RunConfig default_config(EnvKind kind) {
    RunConfig cfg;
    cfg.env = kind;
    cfg.model = EnvModel::make(kind);
    cfg.out_dir = std::string("runs/") + env_kind_name(kind);
    cfg.prior.kind = NoisePrior::Kind::gaussian;
    cfg.prior.mean = Vec(cfg.model.n, 0.0);
    cfg.prior.sigma = Vec(cfg.model.n, 0.1);
    cfg.prior.samples_per_step = 8;
    if (kind == EnvKind::dubins1) {
        // squeeze the first-order car: the disk sits just off the start-goal
        // line (both policies round it on the same, cheaper side), the goal
        // sits close behind it, and the noise ball is wide enough that a
        // policy trusting the nominal prior can actually be dragged into the
        // disk while the robust one holds its margin
        cfg.barrier.obstacle_x = 3.4;
        cfg.barrier.obstacle_y = 3.8;
        cfg.model.xf = {4.8, 6.4, 0.0};
        cfg.train.radius = 0.8;
    }
    return cfg;
}

RunConfig parse_config(const std::string& text) {
    Reader r = lex(text);

    const Value* envv = r.get("run.env");
    if (!envv) throw ConfigError("[run].env is required");
    if (envv->kind != Value::Kind::string)
        fail_at(envv->line, "[run].env must be a string");
    EnvKind kind;
    try {
        kind = env_kind_from_string(envv->str);
    } catch (const ConfigError&) {
        fail_at(envv->line,
                "[run].env must be \"dubins1\", \"dubins2\" or \"quad\"");
    }
    RunConfig cfg = default_config(kind);

    r.str("run.out", cfg.out_dir);
    r.integer("run.episodes", cfg.train.episodes);
    r.u64("run.seed", cfg.train.seed);
    r.integer("run.checkpoint_every", cfg.checkpoint_every);

    r.num("env.dt", cfg.model.dt);
    r.integer("env.horizon", cfg.model.horizon);
    r.vec("env.x0", cfg.model.x0);
    r.vec("env.xf", cfg.model.xf);
    r.vec("env.u_lo", cfg.model.u_lo);
    r.vec("env.u_hi", cfg.model.u_hi);
    r.num("env.goal_tol", cfg.model.goal_tol);
    r.num("env.reward_d", cfg.model.reward_d);
    r.num("env.reward_b", cfg.model.reward_b);
    r.num("env.reward_s", cfg.model.reward_s);
    r.num("env.gravity", cfg.model.gravity);

    r.num("cbf.obstacle_x", cfg.barrier.obstacle_x);
    r.num("cbf.obstacle_y", cfg.barrier.obstacle_y);
    r.num("cbf.obstacle_r", cfg.barrier.obstacle_r);
    r.num("cbf.glide_slope_deg", cfg.barrier.glide_slope_deg);
    r.num("cbf.kappa1", cfg.barrier.kappa1);
    r.num("cbf.kappa2", cfg.barrier.kappa2);

    if (const Value* kv = r.get("noise.kind")) {
        if (kv->kind != Value::Kind::string)
            fail_at(kv->line, "[noise].kind must be a string");
        if (kv->str == "gaussian") cfg.prior.kind = NoisePrior::Kind::gaussian;
        else if (kv->str == "uniform") cfg.prior.kind = NoisePrior::Kind::uniform;
        else fail_at(kv->line, "[noise].kind must be \"gaussian\" or \"uniform\"");
    }
    r.vec("noise.mean", cfg.prior.mean);
    r.vec("noise.sigma", cfg.prior.sigma);
    r.vec("noise.lo", cfg.prior.lo);
    r.vec("noise.hi", cfg.prior.hi);
    r.integer("noise.samples_per_step", cfg.prior.samples_per_step);

    r.num("ambiguity.radius", cfg.train.radius);
    r.flag("ambiguity.estimate_from_buffer", cfg.train.estimate_radius_from_buffer);
    r.num("ambiguity.wasserstein_rho", cfg.train.wasserstein_rho);

    r.integer("ddpg.batch_size", cfg.train.batch_size);
    r.integer("ddpg.buffer_capacity", cfg.train.buffer_capacity);
    r.num("ddpg.actor_lr", cfg.train.actor_lr);
    r.num("ddpg.critic_lr", cfg.train.critic_lr);
    r.num("ddpg.tau", cfg.train.tau);
    r.num("ddpg.gamma", cfg.train.gamma);
    r.sizes("ddpg.hidden", cfg.train.hidden);
    r.num("ddpg.ou_theta", cfg.train.ou_theta);
    r.num("ddpg.ou_sigma", cfg.train.ou_sigma);
    if (const Value* cv = r.get("ddpg.critic_action_source")) {
        if (cv->kind != Value::Kind::string)
            fail_at(cv->line, "[ddpg].critic_action_source must be a string");
        if (cv->str == "rectified") cfg.train.critic_uses_rectified = true;
        else if (cv->str == "raw") cfg.train.critic_uses_rectified = false;
        else
            fail_at(cv->line,
                    "[ddpg].critic_action_source must be \"rectified\" or \"raw\"");
    }

    r.num("adversary.step", cfg.train.adversary_step);
    r.num("adversary.decay", cfg.train.adversary_decay);

    r.finish();

    // The cone half-angle decides the whole safe set for the quad; defaulting
    // it silently would hide the most safety-critical knob, so demand it.
    if (kind == EnvKind::quad && !r.had("cbf.glide_slope_deg"))
        throw ConfigError(
            "[cbf].glide_slope_deg is required when env = \"quad\"");

    validate_config(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void validate_config(const RunConfig& cfg) {
    auto bad = [](const std::string& msg) { throw ConfigError(msg); };
    auto pos = [&](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            bad(std::string(name) + " must be positive");
    };
    auto nonneg = [&](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v))
            bad(std::string(name) + " must be nonnegative");
    };
    auto sized = [&](const Vec& v, std::size_t want, const char* name) {
        if (v.size() != want)
            bad(std::string(name) + " must have " + std::to_string(want) +
                " entries");
        for (double x : v)
            if (!std::isfinite(x))
                bad(std::string(name) + " entries must be finite");
    };

    const EnvModel& mdl = cfg.model;
    pos(mdl.dt, "[env].dt");
    if (mdl.horizon == 0) bad("[env].horizon must be at least 1");
    sized(mdl.x0, mdl.n, "[env].x0");
    sized(mdl.xf, mdl.n, "[env].xf");
    sized(mdl.u_lo, mdl.m, "[env].u_lo");
    sized(mdl.u_hi, mdl.m, "[env].u_hi");
    for (std::size_t i = 0; i < mdl.m; ++i)
        if (!(mdl.u_lo[i] < mdl.u_hi[i]))
            bad("[env].u_lo must be strictly below [env].u_hi in every channel");
    pos(mdl.goal_tol, "[env].goal_tol");
    nonneg(mdl.reward_d, "[env].reward_d");
    nonneg(mdl.reward_b, "[env].reward_b");
    nonneg(mdl.reward_s, "[env].reward_s");
    pos(mdl.gravity, "[env].gravity");

    const BarrierConfig& cb = cfg.barrier;
    if (!std::isfinite(cb.obstacle_x) || !std::isfinite(cb.obstacle_y))
        bad("[cbf].obstacle_x/obstacle_y must be finite");
    pos(cb.obstacle_r, "[cbf].obstacle_r");
    if (!(cb.glide_slope_deg > 0.0) || !(cb.glide_slope_deg < 90.0))
        bad("[cbf].glide_slope_deg must lie strictly between 0 and 90");
    pos(cb.kappa1, "[cbf].kappa1");
    pos(cb.kappa2, "[cbf].kappa2");

    const NoisePrior& pr = cfg.prior;
    if (pr.kind == NoisePrior::Kind::gaussian) {
        sized(pr.mean, mdl.n, "[noise].mean");
        sized(pr.sigma, mdl.n, "[noise].sigma");
        for (double s : pr.sigma)
            if (!(s >= 0.0)) bad("[noise].sigma entries must be nonnegative");
    } else {
        sized(pr.lo, mdl.n, "[noise].lo");
        sized(pr.hi, mdl.n, "[noise].hi");
        for (std::size_t i = 0; i < mdl.n; ++i)
            if (!(pr.lo[i] <= pr.hi[i]))
                bad("[noise].lo must not exceed [noise].hi");
    }
    if (pr.samples_per_step == 0)
        bad("[noise].samples_per_step must be at least 1");

    const TrainOptions& tr = cfg.train;
    pos(tr.radius, "[ambiguity].radius");
    nonneg(tr.wasserstein_rho, "[ambiguity].wasserstein_rho");
    if (tr.batch_size == 0) bad("[ddpg].batch_size must be at least 1");
    if (tr.buffer_capacity < tr.batch_size)
        bad("[ddpg].buffer_capacity must be at least batch_size");
    pos(tr.actor_lr, "[ddpg].actor_lr");
    pos(tr.critic_lr, "[ddpg].critic_lr");
    if (!(tr.tau > 0.0) || !(tr.tau <= 1.0))
        bad("[ddpg].tau must lie in (0, 1]");
    if (!(tr.gamma > 0.0) || !(tr.gamma <= 1.0))
        bad("[ddpg].gamma must lie in (0, 1]");
    if (tr.hidden.empty()) bad("[ddpg].hidden must be nonempty");
    for (std::size_t w : tr.hidden)
        if (w == 0) bad("[ddpg].hidden entries must be at least 1");
    nonneg(tr.ou_theta, "[ddpg].ou_theta");
    nonneg(tr.ou_sigma, "[ddpg].ou_sigma");
    pos(tr.adversary_step, "[adversary].step");
    if (!(tr.adversary_decay > 0.0) || !(tr.adversary_decay <= 1.0))
        bad("[adversary].decay must lie in (0, 1]");

    if (cfg.out_dir.empty()) bad("[run].out must be nonempty");
}

std::string serialize_config(const RunConfig& cfg) {
    std::string s;
    auto kv_str = [&](const char* k, const std::string& v) {
        s += k;
        s += " = \"";
        s += v;
        s += "\"\n";
    };
    auto kv_num = [&](const char* k, double v) {
        s += k;
        s += " = ";
        s += format_shortest(v);
        s += "\n";
    };
    auto kv_int = [&](const char* k, std::uint64_t v) {
        s += k;
        s += " = ";
        s += std::to_string(v);
        s += "\n";
    };
    auto kv_bool = [&](const char* k, bool v) {
        s += k;
        s += v ? " = true\n" : " = false\n";
    };
    auto kv_vec = [&](const char* k, const Vec& v) {
        if (v.empty()) return;  // absent key round-trips to the empty default
        s += k;
        s += " = [";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            s += format_shortest(v[i]);
        }
        s += "]\n";
    };
    auto kv_sizes = [&](const char* k, const std::vector<std::size_t>& v) {
        s += k;
        s += " = [";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(v[i]);
        }
        s += "]\n";
    };

    s += "# ";
    s += kVersion;
    s += "\n\n[run]\n";
    kv_str("env", env_kind_name(cfg.env));
    kv_str("out", cfg.out_dir);
    kv_int("episodes", cfg.train.episodes);
    kv_int("seed", cfg.train.seed);
    kv_int("checkpoint_every", cfg.checkpoint_every);

    s += "\n[env]\n";
    kv_num("dt", cfg.model.dt);
    kv_int("horizon", cfg.model.horizon);
    kv_vec("x0", cfg.model.x0);
    kv_vec("xf", cfg.model.xf);
    kv_vec("u_lo", cfg.model.u_lo);
    kv_vec("u_hi", cfg.model.u_hi);
    kv_num("goal_tol", cfg.model.goal_tol);
    kv_num("reward_d", cfg.model.reward_d);
    kv_num("reward_b", cfg.model.reward_b);
    kv_num("reward_s", cfg.model.reward_s);
    kv_num("gravity", cfg.model.gravity);

    s += "\n[cbf]\n";
    kv_num("obstacle_x", cfg.barrier.obstacle_x);
    kv_num("obstacle_y", cfg.barrier.obstacle_y);
    kv_num("obstacle_r", cfg.barrier.obstacle_r);
    kv_num("glide_slope_deg", cfg.barrier.glide_slope_deg);
    kv_num("kappa1", cfg.barrier.kappa1);
    kv_num("kappa2", cfg.barrier.kappa2);

    s += "\n[noise]\n";
    kv_str("kind",
           cfg.prior.kind == NoisePrior::Kind::gaussian ? "gaussian" : "uniform");
    kv_vec("mean", cfg.prior.mean);
    kv_vec("sigma", cfg.prior.sigma);
    kv_vec("lo", cfg.prior.lo);
    kv_vec("hi", cfg.prior.hi);
    kv_int("samples_per_step", cfg.prior.samples_per_step);

    s += "\n[ambiguity]\n";
    kv_num("radius", cfg.train.radius);
    kv_bool("estimate_from_buffer", cfg.train.estimate_radius_from_buffer);
    kv_num("wasserstein_rho", cfg.train.wasserstein_rho);

    s += "\n[ddpg]\n";
    kv_int("batch_size", cfg.train.batch_size);
    kv_int("buffer_capacity", cfg.train.buffer_capacity);
    kv_num("actor_lr", cfg.train.actor_lr);
    kv_num("critic_lr", cfg.train.critic_lr);
    kv_num("tau", cfg.train.tau);
    kv_num("gamma", cfg.train.gamma);
    kv_sizes("hidden", cfg.train.hidden);
    kv_num("ou_theta", cfg.train.ou_theta);
    kv_num("ou_sigma", cfg.train.ou_sigma);
    kv_str("critic_action_source",
           cfg.train.critic_uses_rectified ? "rectified" : "raw");

    s += "\n[adversary]\n";
    kv_num("step", cfg.train.adversary_step);
    kv_num("decay", cfg.train.adversary_decay);

    return s;
}

}  // namespace dsrl
