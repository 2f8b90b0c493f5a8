// Preparation stage: clients in possibly poisoned environments jointly
// meta-learn a server dynamics model without sharing transitions.
#pragma once

#include "polres/dynamics.hpp"
#include "polres/qfunction.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace polres {

enum class Aggregation { meta_first_order, meta_second_order, fedavg, none };
std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

enum class OuterOptimizer { adam, sgd };

struct FedConfig {
    int K = 10;
    int rounds = 300;
    int n_interval = 5;
    int X = 100;
    int M = 32;
    int N = 32;
    double alpha = 1e-2;
    double beta = 1e-3;
    int inner_steps = 1;
    // SGD steps a fedavg client takes on its support and query data per round.
    int local_steps = 10;
    Aggregation aggregation = Aggregation::meta_first_order;
    OuterOptimizer outer = OuterOptimizer::adam;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Grid clients learn a tabular Q policy while collecting; cartpole clients
/// act uniformly at random.
struct TabularBehavior {
    TabularQ q = TabularQ::zeros(kGridCells, kGridActions);
    double epsilon = 0.2;
    double lr = 0.1;
    double gamma = 0.99;
};
struct RandomBehavior {};
using BehaviorAgent = std::variant<TabularBehavior, RandomBehavior>;

BehaviorAgent default_behavior(EnvKind kind);

struct ClientNode {
    int index = 0;
    Environment env;
    BehaviorAgent behavior;
    TransitionBatch buffer;   // T_i
    DynamicsModel local_model;  // D_i
    // Episode in progress across collection calls.
    std::optional<State> cursor;
    int cursor_steps = 0;
};

ClientNode make_client(int index, HyperParams hp, const DynamicsModel& shape);

struct MetaGrad {
    GradVector grad;
};
struct AvgParams {
    ParamVector params;
};

struct ClientReport {
    int index = 0;
    double query_loss = 0.0;
    std::variant<MetaGrad, AvgParams> payload;
};

struct ServerState {
    DynamicsModel model;  // θ_S
    AdamState adam;
    int round = 0;
    Aggregation aggregation = Aggregation::meta_first_order;
    OuterOptimizer outer = OuterOptimizer::adam;
    double beta = 1e-3;
};

ServerState make_server(DynamicsModel model, const FedConfig& cfg);

/// Appends `count` transitions gathered by the client's behavior agent.
ClientNode collect(const ClientNode& node, int count, Rng& rng);

struct ClientRoundResult {
    ClientNode node;
    ClientReport report;
};

ClientRoundResult client_round(const ClientNode& node, const ParamVector& broadcast, const FedConfig& cfg, int round,
                               Rng& rng);

ServerState server_meta_update(const ServerState& server, std::vector<ClientReport> reports);
ServerState server_fedavg_update(const ServerState& server, std::vector<ClientReport> reports);

/// Input moments a client may share for the server-side normalizer.
struct InputMoments {
    double count = 0.0;
    Eigen::VectorXd sum;
    Eigen::VectorXd sum_sq;
};
InputMoments input_moments(const TransitionBatch& batch, int num_actions);
Normalizer pooled_normalizer(const std::vector<InputMoments>& parts);

struct LossLogRow {
    int round = 0;
    double mean_query_loss = 0.0;
};

struct PreparationResult {
    ServerState server;
    std::vector<ClientNode> clients;
    std::vector<LossLogRow> log;
};

/// Runs cfg.rounds rounds. Continuous models without a normalizer get one
/// pooled from client input statistics before the first round.
PreparationResult run_preparation(ServerState server, std::vector<ClientNode> clients, const FedConfig& cfg);

void write_loss_log(const std::vector<LossLogRow>& log, Aggregation mode, std::uint64_t seed, const std::string& path);

}  // namespace polres
