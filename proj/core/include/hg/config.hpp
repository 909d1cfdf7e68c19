#pragma once

// Run configuration as INI text:
//
//   [cluster]
//   ratio = 1/64
//   iterations = 5
//   ...
//   [module]
//   layers = 1
//   ...
//
// Every key is optional and falls back to its default. Unknown sections or
// keys are rejected so that typos do not silently change a run.

#include <filesystem>
#include <string>

#include "hg/clustering.hpp"
#include "hg/hgconv.hpp"

namespace hg {

struct ModuleConfig {
    std::size_t layers = 1;
    std::size_t channels = 0;  ///< 0: use the input's channel count
    bool batch_norm = true;
    bool noise_cancel = true;
    bool max_direction = true;
    double degree_eps = kDefaultDegreeEps;

    RefineOptions refine_options() const { return {noise_cancel, max_direction, degree_eps}; }
    friend bool operator==(const ModuleConfig&, const ModuleConfig&) = default;
};

struct RunConfig {
    ClusterConfig cluster;
    ModuleConfig module;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws ConfigError on malformed text, unknown keys or invalid values.
RunConfig parse_config(const std::string& text);
/// Values are written with enough digits to parse back exactly.
std::string serialize_config(const RunConfig& cfg);
/// Throws IoError when the file cannot be read, ConfigError when it cannot be parsed.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace hg
