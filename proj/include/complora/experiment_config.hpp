#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "complora/harness.hpp"

namespace complora {

enum class Command { decompose, train, sweep_c, forget, compare };

std::string to_string(Command c);
/// Accepts decompose, train, sweep-c, forget, compare; ConfigError otherwise.
Command parse_command(const std::string& name);

struct ExperimentConfig {
    Command command = Command::forget;
    SetupConfig setup;
    std::vector<Method> methods{Method::lora, Method::comp_lora};
    TrainConfig train;  // method overwritten per run
    std::optional<std::size_t> c;
    std::optional<std::size_t> p;
    std::vector<std::size_t> shots{8};
    std::size_t n_query = 32;
    std::vector<std::uint64_t> seeds;
    std::vector<std::size_t> dims;  // sweep-c; empty means mirrored_dims
    std::string checkpoint;         // decompose; empty means pretrain from seeds.front()
    std::string output_dir = "out";

    /// p, resolved from whichever of c and p was given.
    std::size_t principal_dim() const;
    EpisodeConfig episode(std::size_t n_shots) const;
};

/// Parses the JSON text of a config file. `command` overrides the file's
/// "command" field when non-empty. Throws ConfigError naming the field.
ExperimentConfig parse_config(const std::string& json_text, const std::string& command = "");

/// Canonical JSON echo of a parsed config.
std::string config_to_json(const ExperimentConfig& config);

}  // namespace complora
