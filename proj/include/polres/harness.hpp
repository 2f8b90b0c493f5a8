// Scenario drivers, run records and the command entry points behind the CLI.
#pragma once

#include "polres/config.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace polres {

struct NumericDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CsvError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------------ records

struct RunRecord {
    std::string scenario;
    std::string method;
    std::uint64_t seed = 0;
    int client_count = 0;
    double poison_fraction = 0.0;
    double deploy_hyperparam = 0.0;
    int episode = 0;
    double score = 0.0;

    bool operator==(const RunRecord&) const = default;
};

inline constexpr const char* kCsvMagic = "# polres-csv v1";

void write_records(const std::vector<RunRecord>& records, std::ostream& out);
void write_records_csv(const std::vector<RunRecord>& records, const std::string& path);
/// Throws CsvError on anything but the exact v1 layout.
std::vector<RunRecord> read_records(std::istream& in);
std::vector<RunRecord> read_records_csv(const std::string& path);

// ------------------------------------------------------------------ drivers

/// Number of worker threads: POLRES_THREADS, 0 or unset meaning hardware
/// concurrency.
int thread_count();
/// Runs fn(0..n-1) on up to thread_count() workers.
void parallel_for(int n, const std::function<void(int)>& fn);

/// Freshly initialized server model for the scenario.
DynamicsModel initial_model(const ExperimentConfig& cfg);
/// Clients 0..K-1 with natural parameters and the poisoning applied.
std::vector<ClientNode> make_clients(const ExperimentConfig& cfg, const DynamicsModel& shape);
/// Federated preparation with cfg.fed (seed included), under `mode`.
PreparationResult prepare(const ExperimentConfig& cfg, Aggregation mode);
/// The victim's own model learned without federation (local SGD only).
DynamicsModel local_only_model(const ExperimentConfig& cfg);

/// Models the methods start diagnosis from.
struct PreparedModels {
    DynamicsModel server;
    std::optional<DynamicsModel> fedavg;
    std::optional<DynamicsModel> local;
};

/// Prepares everything the configured methods need. `server`, when given,
/// replaces the meta preparation.
PreparedModels prepare_models(const ExperimentConfig& cfg, std::optional<DynamicsModel> server = std::nullopt);

/// Every (seed, deploy point, method) run, sorted by seed, deploy point,
/// method and episode. Recovery episodes are numbered after the diagnosis
/// episodes they follow.
std::vector<RunRecord> run_scenario(const ExperimentConfig& cfg, const PreparedModels& models);

/// One preparation per seed (fed.seed = seed), then run_scenario for it.
std::vector<RunRecord> run_scenario_per_seed(const ExperimentConfig& cfg);

// -------------------------------------------------------------------- plots

/// One panel per scenario: mean score across seeds with a min-max band.
/// Grid scenarios plot against episode, cartpole against the deploy
/// parameter using each seed's final episode.
std::string render_svg(const std::vector<RunRecord>& records);

// ----------------------------------------------------------------- commands

// Exit codes: 0 ok, 1 other failure, 2 malformed config or CSV,
// 3 numeric divergence, 4 checkpoint does not fit the scenario.
int cmd_prepare(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed_override);
int cmd_recover(const std::string& config, const std::string& checkpoint, const std::string& csv,
                std::optional<std::uint64_t> seed_override);
int cmd_plot(const std::string& csv, const std::string& out);
int cmd_oracle(const std::string& config, std::optional<std::uint64_t> seed_override);

/// Path of the round-loss log written next to a checkpoint.
std::string loss_log_path(const std::string& checkpoint);

}  // namespace polres
