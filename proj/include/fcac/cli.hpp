#pragma once

// Subcommands of the `fcac` tool. Every artifact lands under
// <output_dir>/<experiment_id>/ and embeds the resolved config.

#include "fcac/experiment.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fcac {

struct PrepareResult {
    PreparedData data;
    std::filesystem::path schedule_path;
};

/// Extracts or generates features and writes schedule.json.
PrepareResult cmd_prepare(const ExperimentConfig& config, std::ostream& log);

/// Trains the base session; writes checkpoint.json and train_log.ndjson.
std::filesystem::path cmd_train(const ExperimentConfig& config, std::ostream& log);

/// Runs the incremental sessions once per evaluation seed. Writes
/// <seed>/report.json (plus <seed>/finetune_report.json) and aggregate.json;
/// returns the report paths.
std::vector<std::filesystem::path> cmd_eval(const ExperimentConfig& config,
                                            const std::optional<std::filesystem::path>& checkpoint,
                                            std::ostream& log);

/// Accuracy-per-session SVG of the given reports.
std::filesystem::path cmd_plot(const std::vector<std::filesystem::path>& reports, const std::filesystem::path& output,
                               const std::string& title);

/// Trains and evaluates every on/off combination of the ablation switches
/// under ablation/<variant>/; returns the path of ablation.json.
std::filesystem::path cmd_ablate(const ExperimentConfig& config, std::ostream& log);

/// Command-line entry point. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace fcac
