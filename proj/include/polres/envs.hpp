// Hidden-parameter environment family: a 5x5 elevation grid world and the
// classic cartpole, plus the hyper-parameter poisoning injector.
#pragma once

#include "polres/rng.hpp"

#include <Eigen/Dense>

#include <array>
#include <compare>
#include <functional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace polres {

enum class EnvKind { grid, cartpole };
std::string to_string(EnvKind k);

// ----------------------------------------------------------------- grid world

inline constexpr int kGridSide = 5;
inline constexpr int kGridCells = kGridSide * kGridSide;
inline constexpr int kGridActions = 4;
inline constexpr int kGridStepCap = 100;
inline constexpr double kGridStepReward = -0.01;
inline constexpr double kGridGoalReward = 1.0;
inline constexpr double kGridMaxElevation = 4.0;

enum GridAction : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

struct GridState {
    int row = 0;
    int col = 0;

    int index() const { return row * kGridSide + col; }
    static GridState from_index(int i) { return {i / kGridSide, i % kGridSide}; }
    auto operator<=>(const GridState&) const = default;
};

inline constexpr GridState kGridStart{0, 0};
inline constexpr GridState kGridGoal{kGridSide - 1, kGridSide - 1};

/// Move-success curve p = sigmoid(c0 - c1 * (h_target - h_current)).
struct GridSlope {
    double c0 = 2.0;
    double c1 = 2.0;
};

struct GridHyperParams {
    std::array<double, kGridCells> elevations{};  // row-major
    GridSlope slope{};

    double elevation(GridState s) const { return elevations[s.index()]; }
    bool operator==(const GridHyperParams&) const = default;
};

// ------------------------------------------------------------------- cartpole

inline constexpr int kCartpoleActions = 2;
inline constexpr int kCartpoleStateDim = 4;
inline constexpr int kCartpoleStepCap = 500;

struct CartpoleConstants {
    double gravity = 9.8;
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double force = 10.0;
    double tau = 0.02;
    double theta_limit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
    double x_limit = 2.4;
};
inline constexpr CartpoleConstants kCartpole{};

struct CartpoleState {
    double x = 0.0;
    double x_dot = 0.0;
    double theta = 0.0;
    double theta_dot = 0.0;

    Eigen::Vector4d vec() const { return {x, x_dot, theta, theta_dot}; }
    static CartpoleState from_vec(const Eigen::Ref<const Eigen::VectorXd>& v) { return {v[0], v[1], v[2], v[3]}; }
    bool operator==(const CartpoleState&) const = default;
};

/// `pole_length` has the classic half-length meaning.
struct CartpoleHyperParams {
    double pole_length = 0.5;
    bool operator==(const CartpoleHyperParams&) const = default;
};

// ------------------------------------------------------------- shared types

using HyperParams = std::variant<GridHyperParams, CartpoleHyperParams>;
using State = std::variant<GridState, CartpoleState>;

EnvKind kind_of(const HyperParams& hp);
EnvKind kind_of(const State& s);
/// Throws std::invalid_argument on out-of-range elevations or pole length.
void validate(const HyperParams& hp);
/// Scalar used for plotting and CSV: pole length, or mean grid elevation.
double summary_value(const HyperParams& hp);

struct GridPrior {
    std::array<double, kGridCells> low{};
    std::array<double, kGridCells> high{};
};
struct CartpolePrior {
    double low = 0.1;
    double high = 0.9;
};
using HyperPrior = std::variant<GridPrior, CartpolePrior>;

HyperParams sample_hyperparams(const HyperPrior& prior, Rng& rng);

struct Transition {
    State s;
    int a = 0;
    State s_next;
    double reward = 0.0;
    bool done = false;
};

// ------------------------------------------------------------------- dynamics

double sigmoid(double x);
/// Probability that an in-bounds move from `from` to `to` succeeds.
double grid_move_probability(const GridHyperParams& hp, GridState from, GridState to);
/// Neighbor in the action's direction, or `s` itself when off-grid.
GridState grid_target(GridState s, int action);
Transition grid_step(const GridHyperParams& hp, GridState s, int action, Rng& rng);
Transition cartpole_step(const CartpoleHyperParams& hp, const CartpoleState& s, int action);

/// Reward and termination rules of a family. These never depend on the
/// hidden parameters, so agents may evaluate them on imagined states.
struct EnvRules {
    EnvKind kind = EnvKind::grid;

    bool terminal(const State& s_next) const;
    double reward(const State& s, int a, const State& s_next) const;
    int num_actions() const { return kind == EnvKind::grid ? kGridActions : kCartpoleActions; }
};

/// One environment instance: a hidden parameter plus the episode rules.
class Environment {
public:
    explicit Environment(HyperParams hp);

    EnvKind kind() const { return kind_of(hp_); }
    EnvRules rules() const { return {kind()}; }
    int num_actions() const { return rules().num_actions(); }
    int step_cap() const { return kind() == EnvKind::grid ? kGridStepCap : kCartpoleStepCap; }

    State reset(Rng& rng) const;
    Transition step(const State& s, int action, Rng& rng) const;

    /// Simulator-side access. Agent code receives transitions only.
    const HyperParams& hyperparams() const { return hp_; }

private:
    HyperParams hp_;
};

using Policy = std::function<int(const State&, Rng&)>;

struct EpisodeTrace {
    std::vector<Transition> transitions;
    double total_return = 0.0;
    bool truncated = false;  // ended by the step cap rather than a terminal state
};

EpisodeTrace run_episode(const Environment& env, const Policy& policy, int max_steps, Rng& rng);

Policy constant_policy(int action);
Policy uniform_random_policy(int num_actions);
/// With probability epsilon a uniform action, otherwise `base`.
Policy epsilon_greedy(Policy base, int num_actions, double epsilon);

// ------------------------------------------------------------------ poisoning

enum class PoisonSchedule { once_at_start };

struct PoisonSpec {
    std::set<int> targets;
    PoisonSchedule schedule = PoisonSchedule::once_at_start;
    HyperParams poisoned_value = CartpoleHyperParams{};

    void validate(int client_count) const;
};

HyperParams apply_poison(const PoisonSpec& spec, int client_index, const HyperParams& natural);

}  // namespace polres
