#include "dsrl/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dsrl {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write file '" + path + "'");
    out << content;
    out.flush();
    if (!out) throw ConfigError("write failed for '" + path + "'");
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec)
        throw ConfigError("cannot create directory '" + path +
                          "': " + ec.message());
}

std::string metrics_line(const EpisodeMetrics& m) {
    std::string s = "{\"episode\":" + std::to_string(m.episode);
    s += ",\"return\":" + format_double(m.episode_return);
    s += ",\"loss\":" + format_double(m.adversary_loss);
    s += ",\"min_h\":" + format_double(m.min_h);
    s += ",\"omega\":[";
    for (std::size_t i = 0; i < m.omega.size(); ++i) {
        if (i) s += ",";
        s += format_double(m.omega[i]);
    }
    s += "],\"fallbacks\":" + std::to_string(m.fallback_count);
    s += ",\"steps\":" + std::to_string(m.steps);
    s += ",\"goal\":";
    s += m.goal ? "true" : "false";
    s += "}";
    return s;
}

std::vector<EpisodeMetrics> parse_metrics_jsonl(const std::string& text) {
    std::vector<EpisodeMetrics> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            EpisodeMetrics m;
            m.episode = j.at("episode").get<std::size_t>();
            m.episode_return = j.at("return").get<double>();
            m.adversary_loss = j.at("loss").get<double>();
            m.min_h = j.at("min_h").get<double>();
            m.omega = j.at("omega").get<Vec>();
            m.fallback_count = j.at("fallbacks").get<int>();
            m.steps = j.at("steps").get<std::size_t>();
            m.goal = j.at("goal").get<bool>();
            out.push_back(std::move(m));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("metrics line " + std::to_string(lineno) + ": " +
                              e.what());
        }
    }
    return out;
}

AgentNets Checkpoint::to_nets() const {
    AgentNets nets;
    nets.actor = actor;
    nets.critic = critic;
    nets.target_actor = target_actor;
    nets.target_critic = target_critic;
    nets.actor_opt = AdamState::zeros_like(actor);
    nets.critic_opt = AdamState::zeros_like(critic);
    nets.tau = tau;
    nets.gamma = gamma;
    return nets;
}

Checkpoint Checkpoint::from_nets(const AgentNets& nets,
                                 const std::string& env_name,
                                 const std::string& mode, const Vec& omega) {
    Checkpoint ck;
    ck.env_name = env_name;
    ck.mode = mode;
    ck.actor = nets.actor;
    ck.critic = nets.critic;
    ck.target_actor = nets.target_actor;
    ck.target_critic = nets.target_critic;
    ck.omega = omega;
    ck.tau = nets.tau;
    ck.gamma = nets.gamma;
    return ck;
}

std::string checkpoint_to_json(const Checkpoint& ck) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["env"] = ck.env_name;
    j["mode"] = ck.mode;
    j["tau"] = ck.tau;
    j["gamma"] = ck.gamma;
    j["omega"] = ck.omega;
    j["actor"] = nlohmann::json::parse(mlp_to_json(ck.actor));
    j["critic"] = nlohmann::json::parse(mlp_to_json(ck.critic));
    j["target_actor"] = nlohmann::json::parse(mlp_to_json(ck.target_actor));
    j["target_critic"] = nlohmann::json::parse(mlp_to_json(ck.target_critic));
    return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        Checkpoint ck;
        ck.env_name = j.at("env").get<std::string>();
        ck.mode = j.at("mode").get<std::string>();
        ck.tau = j.at("tau").get<double>();
        ck.gamma = j.at("gamma").get<double>();
        ck.omega = j.at("omega").get<Vec>();
        ck.actor = mlp_from_json(j.at("actor").dump());
        ck.critic = mlp_from_json(j.at("critic").dump());
        ck.target_actor = mlp_from_json(j.at("target_actor").dump());
        ck.target_critic = mlp_from_json(j.at("target_critic").dump());
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    write_text_file(path, checkpoint_to_json(ck) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
    try {
        return checkpoint_from_json(read_text_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError("checkpoint '" + path + "': " + e.what());
    }
}

}  // namespace dsrl
