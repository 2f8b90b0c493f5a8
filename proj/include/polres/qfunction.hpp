// Action-value functions for the model-free learners: a table for the grid
// world and a small network (with a lagged target copy) for cartpole.
#pragma once

#include "polres/envs.hpp"
#include "polres/numkit.hpp"

#include <variant>

namespace polres {

struct TabularQ {
    Eigen::MatrixXd values;  // states x actions

    static TabularQ zeros(int states, int actions) { return {Eigen::MatrixXd::Zero(states, actions)}; }
};

struct NetQ {
    NetArch arch;
    ParamVector params;
    ParamVector target_params;  // θ⁻
};

struct QFunction {
    std::variant<TabularQ, NetQ> repr;
    double gamma = 0.99;

    bool tabular() const { return std::holds_alternative<TabularQ>(repr); }
    int num_actions() const;

    /// Q(s, .) under the online parameters.
    Eigen::VectorXd values(const State& s) const;
    /// Q(s, .) under the target parameters; the table is its own target.
    Eigen::VectorXd target_values(const State& s) const;
    /// Lowest-index argmax of the online values.
    int greedy_action(const State& s) const;

    void validate() const;
};

QFunction make_tabular_q(int states, int actions, double gamma);
/// 4 -> hidden -> 2 network over the raw cartpole state.
QFunction make_cartpole_q(std::uint64_t seed, std::vector<int> hidden, double gamma);

Eigen::VectorXd q_input(const State& s);

/// Greedy policy over a snapshot of `q`.
Policy greedy_policy(QFunction q);

/// One tabular Q-learning update toward `target`.
void tabular_update(TabularQ& q, const Transition& t, double target, double lr);

}  // namespace polres
