#include "polres/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace polres {

namespace {

double action_value(const GridHyperParams& hp, const std::array<double, kGridCells>& v, GridState s, int a,
                    double gamma) {
    auto backup = [&](GridState to) {
        const bool goal = to == kGridGoal;
        return (goal ? kGridGoalReward : kGridStepReward) + (goal ? 0.0 : gamma * v[to.index()]);
    };
    const GridState target = grid_target(s, a);
    if (target == s) return backup(s);
    const double p = grid_move_probability(hp, s, target);
    return p * backup(target) + (1.0 - p) * backup(s);
}

}  // namespace

OracleResult value_iteration_oracle(const GridHyperParams& hp, double gamma, double tol, int max_sweeps) {
    validate(HyperParams{hp});
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("oracle: gamma must lie in (0, 1]");
    OracleResult r;
    r.values.fill(0.0);
    for (int sweep = 0;; ++sweep) {
        if (sweep >= max_sweeps) throw std::runtime_error("oracle: value iteration did not converge");
        double change = 0.0;
        for (int i = 0; i < kGridCells; ++i) {
            const GridState s = GridState::from_index(i);
            if (s == kGridGoal) continue;
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < kGridActions; ++a) best = std::max(best, action_value(hp, r.values, s, a, gamma));
            change = std::max(change, std::abs(best - r.values[i]));
            r.values[i] = best;
        }
        if (change < tol) break;
    }
    for (int i = 0; i < kGridCells; ++i) {
        const GridState s = GridState::from_index(i);
        int arg = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < kGridActions; ++a) {
            const double q = action_value(hp, r.values, s, a, gamma);
            if (q > best) {
                best = q;
                arg = a;
            }
        }
        r.optimal_policy[i] = arg;
    }
    r.optimal_return = r.values[kGridStart.index()];
    return r;
}

Policy oracle_policy(const OracleResult& r) {
    return [pi = r.optimal_policy](const State& s, Rng&) { return pi[std::get<GridState>(s).index()]; };
}

}  // namespace polres
