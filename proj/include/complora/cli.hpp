#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "complora/experiment_config.hpp"

namespace complora {

struct RunOptions {
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed_override;
    /// Base directory for relative checkpoint paths in the config.
    std::filesystem::path config_dir;
};

/// Artifacts of one command keyed by file name. `files` is the deterministic
/// payload; wall times go to metadata.json only.
struct CommandOutput {
    std::map<std::string, std::string> files;
    std::string metadata_json;
};

CommandOutput execute(const ExperimentConfig& config, const RunOptions& options);

/// Writes every file atomically into `dir`, creating it when needed.
void write_outputs(const CommandOutput& output, const std::filesystem::path& dir);

/// Entry point of the comp-lora executable:
///   comp-lora <command> --config <path> [--out <dir>] [--jobs N] [--seed-override S]
/// Returns the process exit status; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace complora
