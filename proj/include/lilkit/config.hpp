#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lilkit/gene_model.hpp"
#include "lilkit/kernel.hpp"

namespace lilkit {

enum class ModelKind { gene, iid, ar1 };

struct ModelConfig {
    ModelKind kind = ModelKind::gene;
    LinearGeneParams gene{};
    std::vector<double> iid_atoms{-1.0, 1.0};
    std::vector<double> iid_weights{0.5, 0.5};
    double ar1_kappa = 0.5;
    NoiseLaw ar1_noise{};
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t n = 10000;
    std::size_t trajectories = 100;
    std::size_t burn_in = 1000;
    std::size_t thinning = 1;
    int workers = 1;
    double confidence = 0.95;
};

enum class OutputFormat { csv, json, both };

struct OutputConfig {
    std::string directory = "out";
    OutputFormat formats = OutputFormat::both;
};

/// A state written as [y, mode] in the config.
struct PointConfig {
    double y = 0.0;
    int mode = 1;

    Point point() const { return make_point(y, mode); }
};

struct CheckConditionsTask {
    std::size_t sample_budget = 2000;
    std::size_t drift_budget = 400000;
    std::size_t grid_points = 24;
    double tolerance = 1e-9;
};

struct CouplingTask {
    double gamma = 0.9;
    /// Threshold on V(x) + V(y); 0 derives 4b/(1-a) from the drift estimate.
    double Gamma = 0.0;
    std::size_t drift_budget = 100000;
    std::vector<std::pair<PointConfig, PointConfig>> pairs{{{0.05, 1}, {0.1, 1}}};
    std::size_t horizon = 1000;
    double hit_floor = 1.0;
    std::pair<PointConfig, PointConfig> decay_start{{0.0, 1}, {4.0, 1}};
    std::vector<std::size_t> decay_grid{0, 1, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
    /// Total coupled steps for the marginal test, split into independent
    /// replicates of marginal_horizon steps each.
    std::size_t marginal_steps = 100000;
    std::size_t marginal_horizon = 20;
    std::size_t block_size = 250;
    bool restricted_overlap = false;
};

struct ErgodicityTask {
    PointConfig x{0.0, 1};
    PointConfig y{4.0, 1};
    std::vector<std::size_t> grid{0, 1, 2, 3, 4, 5, 6, 8, 10};
    std::size_t bootstrap = 10;
    std::size_t lp_budget = 2000;
};

struct LilTask {
    /// coordinate | clamp | tanh | min1
    std::string g = "coordinate";
    /// Atoms of μ̂* when the invariant law is not known in closed form.
    std::size_t invariant_atoms = 2000;
    std::size_t sigma2_states = 20000;
    /// Truncation order of χ; negative picks it from the tail bound.
    long truncation = -1;
    std::size_t inner_samples = 500;
    /// Tail parameters; negative c̃ estimates them from a decay run.
    double tail_c = -1.0;
    double tail_q = 0.0;
    double truncation_tol = 1e-3;
    std::vector<std::size_t> checkpoints;
    std::vector<std::size_t> path_lengths;
    std::size_t path_nodes = 65536;
    std::size_t rhat_from = 1000;
    /// Full series kept for h_n² and the diagnostics (0: min(n, 1e4) and
    /// min(trajectories, 200)).
    std::size_t series_length = 0;
    std::size_t series_trajectories = 0;
    int eta_tilde_sign = 1;
    /// Known ⟨g, μ*⟩; NaN estimates it from μ̂*.
    double g_mean = std::numeric_limits<double>::quiet_NaN();
    std::size_t tail_trajectories = 500;
    std::vector<std::size_t> tail_grid{0, 1, 2, 3, 4, 6, 8};
    std::size_t chi_nodes = 257;
    std::size_t regression_length = 10000;
    std::size_t regression_trajectories = 20;
    std::size_t identity_states = 10;
    std::size_t identity_outer = 1000;
};

struct SimulateTask {
    PointConfig start{0.0, 1};
};

struct ExperimentConfig {
    std::string command;
    ModelConfig model{};
    RunConfig run{};
    OutputConfig output{};
    CheckConditionsTask check_conditions{};
    CouplingTask coupling{};
    ErgodicityTask ergodicity{};
    LilTask lil{};
    SimulateTask simulate{};
    /// Normalised config after overrides, hashed into the manifest.
    nlohmann::json resolved;
};

inline constexpr const char* kEnvPrefix = "LILKIT_";

/// Applies LILKIT_SECTION__KEY=value overrides; the value is parsed as JSON
/// and falls back to a string.
void apply_env_overrides(nlohmann::json& doc, char** envp);

/// Validates the document against the schema of `command` and fills the
/// typed config. Unknown keys, wrong types and out-of-range values throw
/// ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& command);

ExperimentConfig load_config(const std::string& path, const std::string& command, char** envp = nullptr);

Kernel build_kernel(const ModelConfig& m);
/// Gene model spec for ModelKind::gene; throws ConfigError otherwise.
GeneModelSpec build_gene_model(const ModelConfig& m);

}  // namespace lilkit
