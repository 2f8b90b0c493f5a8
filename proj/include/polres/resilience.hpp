// Diagnosis and recovery of a poisoned policy, plus the base learners whose
// policies get poisoned. Model-free agents recover with value-expansion
// targets; model-based agents replan with MPC over a cross-entropy search.
#pragma once

#include "polres/dynamics.hpp"
#include "polres/qfunction.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace polres {

// ------------------------------------------------------------- imagination

/// Next-state generator used for imagined rollouts.
using DynamicsFn = std::function<State(const State&, int, Rng&)>;

/// `sample` draws discrete successors; otherwise the argmax/deterministic one.
DynamicsFn model_dynamics(DynamicsModel model, bool sample);
DynamicsFn ensemble_dynamics(EnsembleModel ens);

struct ImaginedStep {
    State s;
    int a = 0;
    State s_next;
    double reward = 0.0;
    int alive = 1;  // cumulative non-termination through this step
};

/// Chooses the action of an imagined step (step index, state).
using ActionSource = std::function<int(int, const State&, Rng&)>;
ActionSource from_policy(Policy p);
ActionSource from_sequence(std::vector<int> actions);

/// `depth` imagined steps from s0. Rewards and termination come from the
/// family rules; once a step terminates, alive stays 0.
std::vector<ImaginedStep> rollout_imagine(const DynamicsFn& dyn, const EnvRules& rules, const State& s0,
                                          const ActionSource& actions, int depth, Rng& rng);

// --------------------------------------------------------------------- MVE

struct MveConfig {
    int h = 3;
    double gamma = 0.99;
    void validate() const;
};

/// r + gamma * (1 - done) * Q⁻(s', greedy(s')).
double td_target(const Transition& t, const QFunction& q);

/// h-step value-expansion target: imagined rewards along the greedy policy
/// from t.s_next, closed by the target Q at the last imagined state.
double mve_target(const Transition& t, const DynamicsFn& dyn, const EnvRules& rules, const QFunction& q,
                  const MveConfig& mcfg, Rng& rng);

/// Batched targets for a network Q and a continuous model (deterministic
/// prediction). Columns of the result match `batch`.
Eigen::VectorXd mve_targets_batch(const std::vector<Transition>& batch, const DynamicsModel& model,
                                  const EnvRules& rules, const QFunction& q, const MveConfig& mcfg);

// ------------------------------------------------------------ base learners

enum class Learner { tabular_q, dqn };

struct LearnerConfig {
    double gamma = 0.99;
    // tabular
    double tab_lr = 0.1;
    double tab_epsilon = 0.2;
    // dqn
    std::vector<int> hidden{64, 64};
    double lr = 1e-3;
    int batch = 64;
    int replay_capacity = 50000;
    int warmup = 1000;
    int target_sync = 500;
    double eps_start = 1.0;
    double eps_end = 0.02;
    int eps_decay_steps = 10000;
    int eval_every = 10;    // episodes
    int eval_episodes = 3;
    double stop_score = 500.0;  // early stop once evaluation reaches this
};

struct TrainedPolicy {
    Policy policy;
    QFunction q;
};

/// Learns in `env` for `budget` episodes. The DQN keeps its best evaluated
/// snapshot.
TrainedPolicy train_poisoned_policy(const Environment& env, Learner learner, int budget, std::uint64_t seed,
                                    const LearnerConfig& lcfg = {});

double evaluate_policy(const Environment& env, const Policy& policy, int episodes, Rng& rng);

// ---------------------------------------------------------------- diagnosis

struct DiagnosisConfig {
    int n_episodes = 2;
    int adapt_steps = 20;
    double alpha = 1e-2;
    double epsilon = 0.2;
    // 0: every step on the pooled data; otherwise a fresh random minibatch.
    int minibatch = 0;
    void validate() const;
};

struct Diagnosis {
    DynamicsModel model;
    TransitionBatch data;
};

/// n_episodes of the (epsilon-greedy) poisoned policy in the deployment
/// environment.
TransitionBatch collect_diagnosis(const Environment& deploy, const Policy& poisoned, const DiagnosisConfig& dcfg,
                                  Rng& rng);
/// Few-shot SGD from `init`. A continuous model without a normalizer gets
/// one fit on the data.
DynamicsModel fine_tune(const DynamicsModel& init, const TransitionBatch& data, const DiagnosisConfig& dcfg, Rng& rng);
/// collect_diagnosis, then fine_tune.
Diagnosis diagnose(const DynamicsModel& init, const Environment& deploy, const Policy& poisoned,
                   const DiagnosisConfig& dcfg, Rng& rng);

// ------------------------------------------------------ model-free recovery

struct RecoveryConfig {
    double epsilon = 0.1;
    // tabular
    double tab_lr = 0.1;
    int planning_sweeps = 10;  // imagined sweeps over every (s, a) per episode
    bool sample_model = true;
    // dqn
    double lr = 1e-3;
    int batch = 64;
    int updates_per_step = 1;
    int target_sync = 250;
    // scoring: greedy evaluation after each episode (0: the episode's return)
    int eval_episodes = 0;
    void validate() const;
};

struct RecoveryResult {
    QFunction q;
    Policy policy;
    std::vector<double> scores;
};

/// Continues value learning in `deploy` for `budget` episodes with every
/// bootstrap target replaced by the MVE target under `model`. `seed_data`
/// (the diagnosis transitions) primes the replay data.
RecoveryResult recover_model_free(const QFunction& q, const DynamicsModel& model, const Environment& deploy,
                                  const MveConfig& mcfg, const RecoveryConfig& rcfg, int budget,
                                  const TransitionBatch& seed_data, Rng& rng);

// ----------------------------------------------------- model-based recovery

struct CemConfig {
    int H = 20;
    int population = 200;
    double elite_frac = 0.10;
    int iterations = 5;
    double init_mean = 0.5;
    double init_std = 0.5;
    void validate() const;
    int elites() const;
};

/// Scores each column of an H x population matrix of samples in [0, 1].
using SequenceScorer = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

struct CemIteration {
    double population_mean_score = 0.0;
    double elite_mean_score = 0.0;
};

struct CemResult {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;
    std::vector<int> actions;
    std::vector<CemIteration> history;
};

/// Real sample in [0, 1] to one of `num_actions` discrete actions; with two
/// actions this is a threshold at 0.5.
int discretize_action(double u, int num_actions);

/// `warm_mean`, when given, replaces the constant initial mean sequence.
CemResult cem_optimize(const SequenceScorer& scorer, const CemConfig& ccfg, int num_actions, Rng& rng,
                       const Eigen::VectorXd* warm_mean = nullptr);

/// Scores sequences by imagined cumulative reward under a continuous model.
SequenceScorer model_scorer(const DynamicsModel& model, const EnvRules& rules, const State& s);

CemResult cem_plan(const DynamicsModel& model, const EnvRules& rules, const State& s, const CemConfig& ccfg, Rng& rng);
int mpc_act(const DynamicsModel& model, const EnvRules& rules, const State& s, const CemConfig& ccfg, Rng& rng);
/// Receding-horizon policy replanning at every real step.
Policy mpc_policy(DynamicsModel model, EnvRules rules, CemConfig ccfg);

/// Plans against the true simulator, for reference runs.
SequenceScorer oracle_scorer(const HyperParams& hp, const State& s);

struct ModelLearnerConfig {
    int episodes = 30;
    FitConfig fit{60, 64, 2e-3};
    std::vector<int> hidden{32, 32};
};

/// Model-based victim: a dynamics model fit on random-policy data from the
/// (poisoned) training environment.
DynamicsModel train_poisoned_model(const Environment& env, const ModelLearnerConfig& mcfg, std::uint64_t seed);

}  // namespace polres
