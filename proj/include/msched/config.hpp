#pragma once

#include <cstdint>
#include <string>

#include "msched/bench.hpp"

namespace msched {

/// The aggregated run configuration the CLI consumes. The JSON schema is
/// strict: unknown keys anywhere are rejected.
struct RunConfig {
    ExperimentConfig experiment;
    std::uint64_t seed = 1;
    std::string output_dir; // optional default; --out overrides
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Parses one "cluster" block (same strict schema as inside RunConfig).
ClusterConfig cluster_from_json_text(const std::string& text);

} // namespace msched
