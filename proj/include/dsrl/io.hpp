#pragma once

#include <string>
#include <vector>

#include "dsrl/ddpg.hpp"
#include "dsrl/mlp.hpp"

namespace dsrl {

std::string read_text_file(const std::string& path);  // ConfigError if unreadable
void write_text_file(const std::string& path, const std::string& content);
void ensure_dir(const std::string& path);

/// One JSONL record, fixed key order, %.17g numbers: reruns of the same
/// seed must produce byte-identical logs.
std::string metrics_line(const EpisodeMetrics& m);
std::vector<EpisodeMetrics> parse_metrics_jsonl(const std::string& text);

// A trained agent frozen to disk: the four nets, the adversary iterate it
// was trained against, and enough tags to refuse mismatched reuse.
struct Checkpoint {
    std::string env_name;
    std::string mode;  // "dsrl" | "baseline"
    MLPParams actor, critic, target_actor, target_critic;
    Vec omega;
    double tau = 0.005;
    double gamma = 0.99;

    /// Fresh optimizer state; the checkpoint carries none.
    AgentNets to_nets() const;
    static Checkpoint from_nets(const AgentNets& nets, const std::string& env_name,
                                const std::string& mode, const Vec& omega);
};

std::string checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);  // ConfigError on bad file

}  // namespace dsrl
