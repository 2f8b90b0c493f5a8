#include "polres/qfunction.hpp"

#include <stdexcept>

namespace polres {

Eigen::VectorXd q_input(const State& s) {
    if (const auto* g = std::get_if<GridState>(&s)) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(kGridCells);
        x[g->index()] = 1.0;
        return x;
    }
    return std::get<CartpoleState>(s).vec();
}

int QFunction::num_actions() const {
    if (const auto* t = std::get_if<TabularQ>(&repr)) return static_cast<int>(t->values.cols());
    return std::get<NetQ>(repr).arch.output_dim;
}

Eigen::VectorXd QFunction::values(const State& s) const {
    if (const auto* t = std::get_if<TabularQ>(&repr)) return t->values.row(std::get<GridState>(s).index()).transpose();
    const auto& n = std::get<NetQ>(repr);
    return net_forward(n.arch, n.params, q_input(s));
}

Eigen::VectorXd QFunction::target_values(const State& s) const {
    if (tabular()) return values(s);
    const auto& n = std::get<NetQ>(repr);
    return net_forward(n.arch, n.target_params, q_input(s));
}

int QFunction::greedy_action(const State& s) const {
    Eigen::Index best = 0;
    values(s).maxCoeff(&best);
    return static_cast<int>(best);
}

void QFunction::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("QFunction: gamma must lie in (0, 1]");
    if (const auto* t = std::get_if<TabularQ>(&repr)) {
        if (!t->values.allFinite()) throw std::invalid_argument("QFunction: non-finite table");
        return;
    }
    const auto& n = std::get<NetQ>(repr);
    n.arch.validate();
    if (n.params.size() != n.arch.param_count() || n.target_params.size() != n.params.size())
        throw std::invalid_argument("QFunction: parameter shapes disagree");
}

QFunction make_tabular_q(int states, int actions, double gamma) {
    return {TabularQ::zeros(states, actions), gamma};
}

QFunction make_cartpole_q(std::uint64_t seed, std::vector<int> hidden, double gamma) {
    NetQ n;
    n.arch = NetArch{kCartpoleStateDim, std::move(hidden), kCartpoleActions, Activation::tanh};
    n.params = net_init(n.arch, seed);
    n.target_params = n.params;
    return {std::move(n), gamma};
}

Policy greedy_policy(QFunction q) {
    return [q = std::move(q)](const State& s, Rng&) { return q.greedy_action(s); };
}

void tabular_update(TabularQ& q, const Transition& t, double target, double lr) {
    double& v = q.values(std::get<GridState>(t.s).index(), t.a);
    v += lr * (target - v);
}

}  // namespace polres
