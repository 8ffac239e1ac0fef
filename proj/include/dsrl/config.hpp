#pragma once

#include <string>

#include "dsrl/cbf.hpp"
#include "dsrl/ddpg.hpp"
#include "dsrl/env.hpp"

namespace dsrl {

// Everything a run needs, resolved: the plant, the barrier geometry, the
// noise prior, and the learner/adversary knobs. Files hold a TOML subset
// (sections, key = value, strings/bools/numbers/flat numeric arrays, #
// comments); anything a file leaves out keeps the per-environment default.
struct RunConfig {
    EnvKind env = EnvKind::dubins1;
    std::string out_dir = "runs/out";
    std::size_t checkpoint_every = 50;  // 0 = final checkpoint only

    EnvModel model;
    BarrierConfig barrier;
    NoisePrior prior;
    TrainOptions train;  // episodes and seed live here

    bool operator==(const RunConfig&) const = default;
};

RunConfig default_config(EnvKind kind);

/// Parse + validate. ConfigError carries the offending line or the full
/// [section].key name. env = "quad" additionally requires the file to set
/// [cbf].glide_slope_deg explicitly.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical resolved form: fixed section/key order, shortest-round-trip
/// numbers, version comment up top. parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& cfg);

/// Range/shape checks only; parse_config already ran this.
void validate_config(const RunConfig& cfg);

}  // namespace dsrl
