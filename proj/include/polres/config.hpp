// Experiment configuration: a strict JSON schema (unknown keys are errors)
// mirroring the library's config structs.
#pragma once

#include "polres/federated.hpp"
#include "polres/resilience.hpp"

#include <json.hpp>

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace polres {

enum class Scenario { grid_recovery, grid_poison_prop, cartpole_mf, cartpole_mb };
std::string to_string(Scenario s);
EnvKind env_kind(Scenario s);

enum class Method { ours, no_resilience, isolated_resilience, no_federation, fedavg };
std::string to_string(Method m);

/// Malformed or inconsistent configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Where the clients' natural (unpoisoned) parameters come from: a fixed grid
/// layout, or a uniform pole-length range sampled once per client.
struct ClientSetup {
    HyperParams natural = GridHyperParams{};
    HyperPrior prior = CartpolePrior{};
    double behavior_epsilon = 0.2;
};

struct VictimConfig {
    int budget = 300;  // training episodes in the poisoned environment
    LearnerConfig learner;
    ModelLearnerConfig model;  // model-based victims
};

struct RecoverySetup {
    int budget = 5;  // recovery episodes (model-based: evaluation episodes)
    RecoveryConfig rc;
};

struct ExperimentConfig {
    Scenario scenario = Scenario::grid_recovery;
    FedConfig fed;
    PoisonSpec poison;
    DiagnosisConfig diagnosis;
    MveConfig mve;
    CemConfig cem;
    std::vector<HyperParams> deploy_sweep;
    std::vector<std::uint64_t> seeds;
    std::set<Method> baselines;
    // Extensions beyond the core fields.
    std::vector<int> model_hidden{32, 32};  // cartpole dynamics model
    ClientSetup clients;
    VictimConfig victim;
    RecoverySetup recovery;

    /// Throws ConfigError.
    void validate() const;
    double poison_fraction() const { return static_cast<double>(poison.targets.size()) / fed.K; }
    /// The poisoned client whose policy gets deployed (lowest target index).
    int victim_index() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

nlohmann::json hyperparams_to_json(const HyperParams& hp);
HyperParams hyperparams_from_json(const nlohmann::json& j);

/// Replaces the seed list with {seed} and uses it for preparation as well.
ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed);

}  // namespace polres
