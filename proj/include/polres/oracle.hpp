// Exact optimum of a grid-world instance by value iteration on the true
// transition probabilities. Used as the recovery yardstick.
#pragma once

#include "polres/envs.hpp"

#include <array>

namespace polres {

struct OracleResult {
    double optimal_return = 0.0;  // expected return from the start cell
    std::array<double, kGridCells> values{};
    std::array<int, kGridCells> optimal_policy{};
};

OracleResult value_iteration_oracle(const GridHyperParams& hp, double gamma = 1.0, double tol = 1e-10,
                                    int max_sweeps = 1000000);

Policy oracle_policy(const OracleResult& r);

}  // namespace polres
