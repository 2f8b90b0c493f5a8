#include "polres/envs.hpp"

#include <doctest.h>

#include <cmath>

using namespace polres;

namespace {

GridHyperParams flat() { return GridHyperParams{}; }

}  // namespace

TEST_CASE("grid move probability follows the logistic slope rule") {
    GridHyperParams hp = flat();
    CHECK(grid_move_probability(hp, {0, 0}, {0, 1}) == doctest::Approx(0.880797).epsilon(1e-6));
    hp.elevations[GridState{0, 1}.index()] = 4.0;
    CHECK(grid_move_probability(hp, {0, 0}, {0, 1}) == doctest::Approx(0.002473).epsilon(1e-3));
    // downhill is nearly certain
    CHECK(grid_move_probability(hp, {0, 1}, {0, 0}) > 0.9999);
}

TEST_CASE("grid boundary moves keep the agent in place regardless of rng") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        const Transition t = grid_step(flat(), {0, 0}, kLeft, rng);
        CHECK(std::get<GridState>(t.s_next) == GridState{0, 0});
        CHECK(t.reward == kGridStepReward);
        CHECK_FALSE(t.done);
    }
}

TEST_CASE("grid move frequency matches the closed form (Monte Carlo)") {
    GridHyperParams hp = flat();
    hp.elevations[GridState{2, 3}.index()] = 4.0;
    const double p = sigmoid(2.0 - 2.0 * 4.0);
    Rng rng(5);
    int moved = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) moved += std::get<GridState>(grid_step(hp, {2, 2}, kRight, rng).s_next) == GridState{2, 3};
    CHECK(std::abs(static_cast<double>(moved) / n - p) <= 0.003);

    int moved_flat = 0;
    for (int i = 0; i < n; ++i) moved_flat += std::get<GridState>(grid_step(flat(), {2, 2}, kDown, rng).s_next) == GridState{3, 2};
    const double pf = sigmoid(2.0);
    const double sigma = std::sqrt(pf * (1 - pf) / n);
    CHECK(std::abs(static_cast<double>(moved_flat) / n - pf) <= 3 * sigma);
}

TEST_CASE("grid steps never leave the lattice and entering the goal terminates") {
    Rng rng(1);
    GridHyperParams hp;
    for (int i = 0; i < kGridCells; ++i) hp.elevations[i] = 4.0 * uniform01(rng);
    for (int k = 0; k < 20000; ++k) {
        const GridState s = GridState::from_index(uniform_int(rng, 0, kGridCells - 1));
        const int a = uniform_int(rng, 0, 3);
        const Transition t = grid_step(hp, s, a, rng);
        const auto n = std::get<GridState>(t.s_next);
        CHECK((n == s || n == grid_target(s, a)));
        CHECK(t.done == (n == kGridGoal));
        CHECK(t.reward == (t.done ? 1.0 : -0.01));
    }
}

TEST_CASE("cartpole single step matches the classic equations") {
    // Independent evaluation written out term by term.
    const double g = 9.8, mc = 1.0, mp = 0.1, l = 0.5, F = 10.0, dt = 0.02;
    const double theta_acc = (0.0 - 1.0 * (F / (mc + mp))) / (l * (4.0 / 3.0 - mp / (mc + mp)));
    const double x_acc = F / (mc + mp) - mp * l * theta_acc / (mc + mp);
    const Transition t = cartpole_step({0.5}, {}, 1);
    const auto n = std::get<CartpoleState>(t.s_next);
    CHECK(n.x == 0.0);
    CHECK(n.theta == 0.0);
    CHECK(n.x_dot == doctest::Approx(dt * x_acc).epsilon(1e-14));
    CHECK(n.theta_dot == doctest::Approx(dt * theta_acc).epsilon(1e-14));
    CHECK(n.theta_dot < 0.0);
    CHECK(n.x_dot > 0.0);
    CHECK(t.reward == 1.0);
    (void)g;
}

TEST_CASE("cartpole termination and determinism") {
    const Transition t = cartpole_step({0.5}, {0.0, 0.0, 0.25, 0.0}, 0);
    CHECK(t.done);
    CHECK(t.reward == 0.0);
    const Transition x_out = cartpole_step({0.5}, {2.5, 0.0, 0.0, 0.0}, 0);
    CHECK(x_out.done);
    const CartpoleState s{0.1, -0.2, 0.03, 0.4};
    CHECK(std::get<CartpoleState>(cartpole_step({0.7}, s, 0).s_next) ==
          std::get<CartpoleState>(cartpole_step({0.7}, s, 0).s_next));
    // a shorter pole reacts faster to the same push
    const double short_pole = std::get<CartpoleState>(cartpole_step({0.1}, {}, 1).s_next).theta_dot;
    const double long_pole = std::get<CartpoleState>(cartpole_step({0.9}, {}, 1).s_next).theta_dot;
    CHECK(std::abs(short_pole) > std::abs(long_pole));
}

TEST_CASE("run_episode") {
    SUBCASE("always-left from the start hits the cap") {
        Environment env{GridHyperParams{}};
        Rng rng(0);
        const auto tr = run_episode(env, constant_policy(kLeft), env.step_cap(), rng);
        CHECK(tr.transitions.size() == 100);
        CHECK(tr.truncated);
        CHECK(tr.total_return == doctest::Approx(-1.0).epsilon(1e-12));
        for (const auto& t : tr.transitions) CHECK(std::get<GridState>(t.s_next) == GridState{0, 0});
    }
    SUBCASE("random policy traces are reproducible") {
        Environment env{GridHyperParams{}};
        Rng a(42), b(42);
        const auto ta = run_episode(env, uniform_random_policy(4), 100, a);
        const auto tb = run_episode(env, uniform_random_policy(4), 100, b);
        REQUIRE(ta.transitions.size() == tb.transitions.size());
        for (std::size_t i = 0; i < ta.transitions.size(); ++i) {
            CHECK(std::get<GridState>(ta.transitions[i].s_next) == std::get<GridState>(tb.transitions[i].s_next));
            CHECK(ta.transitions[i].a == tb.transitions[i].a);
        }
        CHECK(ta.total_return == tb.total_return);
    }
    SUBCASE("cartpole returns never exceed the cap") {
        Environment env{CartpoleHyperParams{0.5}};
        Rng rng(1);
        // a simple stabilizing controller
        Policy pd = [](const State& s, Rng&) {
            const auto& c = std::get<CartpoleState>(s);
            return c.theta + 0.5 * c.theta_dot + 0.01 * c.x + 0.1 * c.x_dot > 0 ? 1 : 0;
        };
        for (int ep = 0; ep < 5; ++ep) CHECK(run_episode(env, pd, env.step_cap(), rng).total_return <= 500.0);
    }
    CHECK_THROWS_AS(
        [] {
            Environment env{GridHyperParams{}};
            Rng rng(0);
            run_episode(env, constant_policy(0), 0, rng);
        }(),
        std::invalid_argument);
}

TEST_CASE("apply_poison only touches targets") {
    PoisonSpec spec;
    spec.targets = {0};
    spec.poisoned_value = CartpoleHyperParams{0.5};
    const HyperParams natural = CartpoleHyperParams{0.7};
    CHECK(std::get<CartpoleHyperParams>(apply_poison(spec, 0, natural)).pole_length == 0.5);
    CHECK(std::get<CartpoleHyperParams>(apply_poison(spec, 3, natural)) == CartpoleHyperParams{0.7});

    PoisonSpec all;
    for (int i = 0; i < 10; ++i) all.targets.insert(i);
    all.poisoned_value = CartpoleHyperParams{0.5};
    for (int i = 0; i < 10; ++i)
        CHECK(std::get<CartpoleHyperParams>(apply_poison(all, i, natural)).pole_length == 0.5);

    PoisonSpec bad;
    bad.targets = {10};
    CHECK_THROWS_AS(bad.validate(10), std::invalid_argument);
}

TEST_CASE("sample_hyperparams") {
    Rng rng(8);
    CHECK(std::get<CartpoleHyperParams>(sample_hyperparams(CartpolePrior{0.5, 0.5}, rng)).pole_length == 0.5);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double l = std::get<CartpoleHyperParams>(sample_hyperparams(CartpolePrior{0.1, 0.9}, rng)).pole_length;
        if (i < 10000) CHECK((l >= 0.1 && l <= 0.9));
        sum += l;
    }
    CHECK(std::abs(sum / n - 0.5) <= 0.01);

    GridPrior gp;
    gp.high.fill(1.0);
    gp.low[3] = gp.high[3] = 2.5;
    const auto g = std::get<GridHyperParams>(sample_hyperparams(gp, rng));
    CHECK(g.elevations[3] == 2.5);
    for (double e : g.elevations) CHECK((e >= 0.0 && e <= 2.5));
    CHECK_THROWS_AS(sample_hyperparams(CartpolePrior{0.9, 0.1}, rng), std::invalid_argument);
}

TEST_CASE("hyper-parameter validation") {
    GridHyperParams g;
    g.elevations[0] = 4.5;
    CHECK_THROWS_AS(Environment{g}, std::invalid_argument);
    CHECK_THROWS_AS(Environment{CartpoleHyperParams{0.0}}, std::invalid_argument);
    CHECK_THROWS_AS(Environment{CartpoleHyperParams{2.5}}, std::invalid_argument);
    CHECK_NOTHROW(Environment{CartpoleHyperParams{2.0}});
}
