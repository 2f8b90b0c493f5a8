#include "polres/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace polres {

std::string to_string(EnvKind k) { return k == EnvKind::grid ? "grid" : "cartpole"; }

EnvKind kind_of(const HyperParams& hp) {
    return std::holds_alternative<GridHyperParams>(hp) ? EnvKind::grid : EnvKind::cartpole;
}

EnvKind kind_of(const State& s) { return std::holds_alternative<GridState>(s) ? EnvKind::grid : EnvKind::cartpole; }

void validate(const HyperParams& hp) {
    if (const auto* g = std::get_if<GridHyperParams>(&hp)) {
        for (double e : g->elevations)
            if (!std::isfinite(e) || e < 0.0 || e > kGridMaxElevation)
                throw std::invalid_argument("grid elevation outside [0, 4]");
    } else {
        const double l = std::get<CartpoleHyperParams>(hp).pole_length;
        if (!std::isfinite(l) || l <= 0.0 || l > 2.0) throw std::invalid_argument("pole length outside (0, 2]");
    }
}

double summary_value(const HyperParams& hp) {
    if (const auto* g = std::get_if<GridHyperParams>(&hp)) {
        double s = 0.0;
        for (double e : g->elevations) s += e;
        return s / kGridCells;
    }
    return std::get<CartpoleHyperParams>(hp).pole_length;
}

HyperParams sample_hyperparams(const HyperPrior& prior, Rng& rng) {
    if (const auto* g = std::get_if<GridPrior>(&prior)) {
        GridHyperParams hp;
        for (int i = 0; i < kGridCells; ++i) {
            if (g->low[i] > g->high[i]) throw std::invalid_argument("grid prior: low > high");
            const double u = uniform01(rng);
            hp.elevations[i] = g->low[i] + u * (g->high[i] - g->low[i]);
        }
        return hp;
    }
    const auto& c = std::get<CartpolePrior>(prior);
    if (c.low > c.high) throw std::invalid_argument("cartpole prior: low > high");
    const double u = uniform01(rng);
    return CartpoleHyperParams{c.low + u * (c.high - c.low)};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

GridState grid_target(GridState s, int action) {
    GridState t = s;
    switch (action) {
        case kUp: t.row -= 1; break;
        case kDown: t.row += 1; break;
        case kLeft: t.col -= 1; break;
        case kRight: t.col += 1; break;
        default: throw std::invalid_argument("grid action out of range");
    }
    if (t.row < 0 || t.row >= kGridSide || t.col < 0 || t.col >= kGridSide) return s;
    return t;
}

double grid_move_probability(const GridHyperParams& hp, GridState from, GridState to) {
    const double dh = hp.elevation(to) - hp.elevation(from);
    return sigmoid(hp.slope.c0 - hp.slope.c1 * dh);
}

Transition grid_step(const GridHyperParams& hp, GridState s, int action, Rng& rng) {
    const GridState target = grid_target(s, action);
    // One draw per step keeps the stream aligned whether or not the move is in bounds.
    const double u = uniform01(rng);
    GridState next = s;
    if (target != s && u < grid_move_probability(hp, s, target)) next = target;
    const bool at_goal = next == kGridGoal;
    return {s, action, next, at_goal ? kGridGoalReward : kGridStepReward, at_goal};
}

Transition cartpole_step(const CartpoleHyperParams& hp, const CartpoleState& s, int action) {
    if (action < 0 || action >= kCartpoleActions) throw std::invalid_argument("cartpole action out of range");
    const auto& k = kCartpole;
    const double force = action == 1 ? k.force : -k.force;
    const double total_mass = k.cart_mass + k.pole_mass;
    const double polemass_length = k.pole_mass * hp.pole_length;
    const double cos_t = std::cos(s.theta);
    const double sin_t = std::sin(s.theta);
    const double temp = (force + polemass_length * s.theta_dot * s.theta_dot * sin_t) / total_mass;
    const double theta_acc =
        (k.gravity * sin_t - cos_t * temp) /
        (hp.pole_length * (4.0 / 3.0 - k.pole_mass * cos_t * cos_t / total_mass));
    const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

    CartpoleState n;
    n.x = s.x + k.tau * s.x_dot;
    n.x_dot = s.x_dot + k.tau * x_acc;
    n.theta = s.theta + k.tau * s.theta_dot;
    n.theta_dot = s.theta_dot + k.tau * theta_acc;

    Transition t{s, action, n, 0.0, false};
    EnvRules rules{EnvKind::cartpole};
    t.done = rules.terminal(n);
    t.reward = rules.reward(s, action, n);
    return t;
}

bool EnvRules::terminal(const State& s_next) const {
    if (const auto* g = std::get_if<GridState>(&s_next)) return *g == kGridGoal;
    const auto& c = std::get<CartpoleState>(s_next);
    return std::abs(c.theta) > kCartpole.theta_limit || std::abs(c.x) > kCartpole.x_limit;
}

double EnvRules::reward(const State&, int, const State& s_next) const {
    if (kind == EnvKind::grid) return terminal(s_next) ? kGridGoalReward : kGridStepReward;
    return terminal(s_next) ? 0.0 : 1.0;
}

Environment::Environment(HyperParams hp) : hp_(std::move(hp)) { validate(hp_); }

State Environment::reset(Rng& rng) const {
    if (kind() == EnvKind::grid) return kGridStart;
    std::uniform_real_distribution<double> d(-0.05, 0.05);
    CartpoleState s;
    s.x = d(rng);
    s.x_dot = d(rng);
    s.theta = d(rng);
    s.theta_dot = d(rng);
    return s;
}

Transition Environment::step(const State& s, int action, Rng& rng) const {
    if (const auto* g = std::get_if<GridHyperParams>(&hp_)) return grid_step(*g, std::get<GridState>(s), action, rng);
    return cartpole_step(std::get<CartpoleHyperParams>(hp_), std::get<CartpoleState>(s), action);
}

EpisodeTrace run_episode(const Environment& env, const Policy& policy, int max_steps, Rng& rng) {
    if (max_steps < 1) throw std::invalid_argument("run_episode: max_steps must be >= 1");
    EpisodeTrace trace;
    State s = env.reset(rng);
    for (int t = 0; t < max_steps; ++t) {
        const int a = policy(s, rng);
        Transition tr = env.step(s, a, rng);
        trace.total_return += tr.reward;
        s = tr.s_next;
        const bool done = tr.done;
        trace.transitions.push_back(std::move(tr));
        if (done) return trace;
    }
    trace.truncated = true;
    return trace;
}

Policy constant_policy(int action) {
    return [action](const State&, Rng&) { return action; };
}

Policy uniform_random_policy(int num_actions) {
    return [num_actions](const State&, Rng& rng) { return uniform_int(rng, 0, num_actions - 1); };
}

Policy epsilon_greedy(Policy base, int num_actions, double epsilon) {
    return [base = std::move(base), num_actions, epsilon](const State& s, Rng& rng) {
        if (uniform01(rng) < epsilon) return uniform_int(rng, 0, num_actions - 1);
        return base(s, rng);
    };
}

void PoisonSpec::validate(int client_count) const {
    for (int t : targets)
        if (t < 0 || t >= client_count) throw std::invalid_argument("poison target outside client range");
    polres::validate(poisoned_value);
}

HyperParams apply_poison(const PoisonSpec& spec, int client_index, const HyperParams& natural) {
    return spec.targets.count(client_index) ? spec.poisoned_value : natural;
}

}  // namespace polres
