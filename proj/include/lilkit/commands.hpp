#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lilkit/config.hpp"
#include "lilkit/output.hpp"

namespace lilkit {

/// Everything a subcommand produces, before anything touches the disk.
struct CommandOutput {
    RunStatus status = RunStatus::pass;
    nlohmann::json summary;
    std::vector<std::pair<std::string, CsvTable>> csv;
    std::vector<std::pair<std::string, nlohmann::json>> json;

    /// SHA-256 over every rendered artifact in order; equal digests mean
    /// byte-identical outputs.
    std::string digest() const;
};

CommandOutput cmd_check_conditions(const ExperimentConfig& c);
CommandOutput cmd_coupling(const ExperimentConfig& c);
CommandOutput cmd_ergodicity(const ExperimentConfig& c);
CommandOutput cmd_lil(const ExperimentConfig& c);
CommandOutput cmd_simulate(const ExperimentConfig& c);

CommandOutput run_command(const ExperimentConfig& c);

/// Runs the command and writes the artifacts selected by output.formats plus
/// the manifest. Returns the process exit code.
int execute(const ExperimentConfig& c);

/// Median with a distribution-free order-statistic confidence interval.
struct MedianEstimate {
    double median = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};
MedianEstimate median_estimate(std::vector<double> xs, double confidence = 0.95);

}  // namespace lilkit
