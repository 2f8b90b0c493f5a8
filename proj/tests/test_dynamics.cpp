#include "polres/dynamics.hpp"
#include "support/oracles.hpp"
#include "support/reference_models.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace polres;
using polres::testing::central_difference;
using polres::testing::reference_forward;
using polres::testing::rel_err;
using polres::testing::to_std;
using namespace polres::testing;


TEST_CASE("loss_continuous") {
    DynamicsModel m = default_cartpole_model(1, {8});
    m.params.setZero();
    TransitionBatch still{{CartpoleState{0.1, 0, 0, 0}, 0, CartpoleState{0.1, 0, 0, 0}, 1.0, false}};
    CHECK(loss_continuous(m, still) == 0.0);
    // output bias of the last layer, first state dimension
    m.params[m.arch.layer_offset(1) + 8 * 4] = 0.5;
    CHECK(loss_continuous(m, still) == 0.25);
    CHECK_THROWS_AS(loss_discrete(m, still), std::invalid_argument);

    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const DynamicsModel r = small_cartpole_model(rng);
        const auto batch = random_cartpole_batch(rng, 15);
        CHECK(std::abs(loss_continuous(r, batch) - reference_mse(r, to_std(r.params), batch)) <= 1e-12);
    }
}

TEST_CASE("loss_discrete") {
    DynamicsModel m = default_grid_model(3);
    m.params.setZero();
    Rng rng(2);
    const auto batch = random_grid_batch(rng, 40);
    CHECK(loss_discrete(m, batch) == doctest::Approx(std::log(25.0)).epsilon(1e-12));
    CHECK(std::abs(loss_discrete(m, batch) - 3.218876) < 1e-6);

    // put (almost) all mass on the observed successor of one transition
    const Transition t = batch.front();
    DynamicsModel sharp = m;
    sharp.params[sharp.arch.layer_offset(1) + 64 * 25 + std::get<GridState>(t.s_next).index()] = 60.0;
    CHECK(loss_discrete(sharp, {t}) < 1e-20);
    CHECK_THROWS_AS(loss_continuous(m, batch), std::invalid_argument);

    for (int trial = 0; trial < 20; ++trial) {
        const DynamicsModel r = small_grid_model(rng);
        const auto b = random_grid_batch(rng, 12);
        CHECK(std::abs(loss_discrete(r, b) - reference_ce(r, to_std(r.params), b)) <= 1e-12);
    }
}

TEST_CASE("loss gradients match central finite differences") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const DynamicsModel c = small_cartpole_model(rng);
        const auto cb = random_cartpole_batch(rng, 6);
        const auto gc = loss_and_grad(c, cb).grad;
        const auto fc = central_difference([&](const std::vector<double>& p) { return reference_mse(c, p, cb); },
                                           to_std(c.params));
        for (std::size_t i = 0; i < fc.size(); ++i) CHECK(rel_err(gc[i], fc[i], 1e-4) <= 1e-4);

        const DynamicsModel d = small_grid_model(rng);
        const auto db = random_grid_batch(rng, 6);
        const auto gd = loss_and_grad(d, db).grad;
        const auto fd = central_difference([&](const std::vector<double>& p) { return reference_ce(d, p, db); },
                                           to_std(d.params));
        for (std::size_t i = 0; i < fd.size(); ++i) CHECK(rel_err(gd[i], fd[i], 1e-4) <= 1e-4);
    }
}

TEST_CASE("hessian_vector_product matches differences of gradients") {
    Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        for (const DynamicsModel& m : {small_cartpole_model(rng), small_grid_model(rng)}) {
            const auto batch = m.kind == ModelKind::continuous ? random_cartpole_batch(rng, 8) : random_grid_batch(rng, 8);
            const EncodedBatch enc = encode_batch(m, batch);
            Eigen::VectorXd v(m.params.size());
            for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 2 * uniform01(rng) - 1;
            const auto hv = hessian_vector_product(m, enc, v);
            const double h = 1e-5;
            DynamicsModel plus = m, minus = m;
            plus.params += h * v;
            minus.params -= h * v;
            const Eigen::VectorXd fd = (loss_and_grad(plus, enc).grad - loss_and_grad(minus, enc).grad) / (2 * h);
            for (Eigen::Index i = 0; i < hv.size(); ++i) CHECK(rel_err(hv[i], fd[i], 1e-5) <= 1e-4);
        }
    }
}

TEST_CASE("adapt") {
    Rng rng(5);
    const DynamicsModel m = small_grid_model(rng);
    const auto batch = random_grid_batch(rng, 30);
    const DynamicsModel before = m;

    CHECK(bit_equal(adapt(m, batch, 0.0, 3), m));
    const DynamicsModel one = adapt(m, batch, 0.05, 1);
    CHECK(one.params == sgd_step(m.params, loss_and_grad(m, batch).grad, 0.05));
    CHECK(bit_equal(m, before));
    CHECK_THROWS_AS(adapt(m, {}, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(adapt(m, batch, 0.1, 0), std::invalid_argument);

    int improved = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const DynamicsModel r = trial % 2 ? small_grid_model(rng) : small_cartpole_model(rng);
        const auto b = r.kind == ModelKind::discrete ? random_grid_batch(rng, 10) : random_cartpole_batch(rng, 10);
        improved += model_loss(adapt(r, b, 1e-3, 1), b) < model_loss(r, b);
    }
    CHECK(improved >= 95);
}

TEST_CASE("predict_next") {
    DynamicsModel c = default_cartpole_model(1);
    c.params.setZero();
    const CartpoleState s{0.3, -0.1, 0.05, 0.2};
    CHECK(std::get<CartpoleState>(predict_next(c, s, 1)) == s);

    DynamicsModel g = default_grid_model(2);
    g.params.setZero();
    Rng rng(17);
    std::vector<int> counts(kGridCells, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[std::get<GridState>(predict_next(g, GridState{2, 2}, kUp, rng)).index()];
    const double p = 1.0 / kGridCells;
    const double sigma = std::sqrt(n * p * (1 - p));
    for (int k : counts) CHECK(std::abs(k - n * p) <= 3.5 * sigma);

    const DynamicsModel r = default_grid_model(9);
    CHECK(std::get<GridState>(predict_next(r, GridState{1, 1}, kRight)) ==
          std::get<GridState>(predict_next(r, GridState{1, 1}, kRight)));
    CHECK_THROWS_AS(predict_next(r, CartpoleState{}, 0), std::invalid_argument);
}

TEST_CASE("softmax successor distributions are normalized") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        DynamicsModel m = default_grid_model(rng());
        m.params *= 5.0 * uniform01(rng);
        const auto p = successor_distribution(m, GridState::from_index(uniform_int(rng, 0, 24)), uniform_int(rng, 0, 3));
        CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
        CHECK((p.array() >= 0.0).all());
    }
}

TEST_CASE("predict_next_stochastic") {
    DynamicsModel zero = default_cartpole_model(1, {4});
    zero.params.setZero();
    const CartpoleState s{0.2, 0.1, -0.05, 0.3};

    SUBCASE("identical members give the deterministic mean") {
        EnsembleModel e{{zero, zero, zero}};
        Rng rng(1);
        CHECK(std::get<CartpoleState>(predict_next_stochastic(e, s, 0, rng)) == s);
    }
    SUBCASE("two members with deltas 0 and 1") {
        DynamicsModel one = zero;
        one.params[one.arch.layer_offset(1) + 4 * 4] = 1.0;  // output bias, x dimension
        EnsembleModel e{{zero, one}};
        const auto [mean, sd] = ensemble_moments(e, s, 0);
        CHECK(mean[0] == doctest::Approx(s.x + 0.5));
        CHECK(sd[0] == doctest::Approx(0.5));
        CHECK(sd.tail(3).isZero(0.0));
        Rng rng(3);
        const int n = 100000;
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = std::get<CartpoleState>(predict_next_stochastic(e, s, 0, rng)).x - s.x;
            sum += x;
            sq += x * x;
        }
        const double m = sum / n;
        const double var = sq / n - m * m;
        CHECK(std::abs(m - 0.5) <= 3 * 0.5 / std::sqrt(n));
        // sample variance of a normal has sd sigma^2 sqrt(2/n)
        CHECK(std::abs(var - 0.25) <= 3 * 0.25 * std::sqrt(2.0 / n));
    }
    SUBCASE("seeded draws reproduce") {
        const EnsembleModel e = make_ensemble(zero, 7);
        Rng a(9), b(9);
        CHECK(std::get<CartpoleState>(predict_next_stochastic(e, s, 1, a)) ==
              std::get<CartpoleState>(predict_next_stochastic(e, s, 1, b)));
    }
    SUBCASE("discrete ensembles are rejected") {
        EnsembleModel e{{default_grid_model(1)}};
        Rng rng(0);
        CHECK_THROWS_AS(predict_next_stochastic(e, GridState{0, 0}, 0, rng), std::invalid_argument);
    }
}

TEST_CASE("split_support_query") {
    Rng rng(31);
    const auto batch = random_grid_batch(rng, 20);
    auto key = [](const Transition& t) {
        return std::make_tuple(std::get<GridState>(t.s).index(), t.a, std::get<GridState>(t.s_next).index());
    };
    SUBCASE("m + n equal to the batch size partitions it") {
        const auto sp = split_support_query(batch, 12, 8, rng);
        std::multiset<std::tuple<int, int, int>> all, got;
        for (const auto& t : batch) all.insert(key(t));
        for (const auto& t : sp.support) got.insert(key(t));
        for (const auto& t : sp.query) got.insert(key(t));
        CHECK(all == got);
    }
    SUBCASE("support and query are disjoint over 100 random splits") {
        // tag every transition with a unique reward so identity is observable
        TransitionBatch tagged = batch;
        for (std::size_t i = 0; i < tagged.size(); ++i) tagged[i].reward = static_cast<double>(i);
        for (int trial = 0; trial < 100; ++trial) {
            const int m = uniform_int(rng, 1, 10);
            const int n = uniform_int(rng, 1, 10);
            const auto sp = split_support_query(tagged, m, n, rng);
            CHECK(sp.support.size() == static_cast<std::size_t>(m));
            CHECK(sp.query.size() == static_cast<std::size_t>(n));
            std::set<double> ids;
            for (const auto& t : sp.support) ids.insert(t.reward);
            for (const auto& t : sp.query) CHECK(ids.count(t.reward) == 0);
        }
    }
    SUBCASE("seeded splits are identical") {
        Rng a(4), b(4);
        const auto x = split_support_query(batch, 5, 5, a);
        const auto y = split_support_query(batch, 5, 5, b);
        for (int i = 0; i < 5; ++i) CHECK(key(x.support[i]) == key(y.support[i]));
    }
    CHECK_THROWS_AS(split_support_query(batch, 15, 6, rng), std::invalid_argument);
}

TEST_CASE("a continuous model learns a deterministic linear system") {
    // s' = s + 0.1 * (A s + b * u), u = +-1; stored in the cartpole state slots.
    Eigen::Matrix4d A;
    A << 0.0, 1.0, 0.0, 0.0, -0.5, -0.2, 0.3, 0.0, 0.0, 0.0, 0.0, 1.0, 0.2, 0.0, -0.8, -0.1;
    const Eigen::Vector4d b(0.0, 0.5, 0.0, -0.4);
    Rng rng(99);
    auto make = [&](int n) {
        TransitionBatch out;
        for (int i = 0; i < n; ++i) {
            const CartpoleState s = random_cp(rng, 1.0);
            const int a = uniform_int(rng, 0, 1);
            const Eigen::Vector4d sv = s.vec();
            const Eigen::Vector4d next = sv + 0.1 * (A * sv + b * (a == 1 ? 1.0 : -1.0));
            out.push_back({s, a, CartpoleState::from_vec(next), 0.0, false});
        }
        return out;
    };
    const auto train = make(2000);
    const auto test = make(200);
    DynamicsModel m = default_cartpole_model(5, {32});
    m.normalizer = fit_normalizer(train, 2);
    m = fit_model(m, train, FitConfig{150, 32, 3e-3}, rng);
    double sq = 0.0;
    for (const auto& t : test) {
        const Eigen::Vector4d diff =
            std::get<CartpoleState>(predict_next(m, t.s, t.a)).vec() - std::get<CartpoleState>(t.s_next).vec();
        sq += diff.squaredNorm();
    }
    const double rmse = std::sqrt(sq / (4.0 * test.size()));
    CHECK(rmse <= 1e-2);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        DynamicsModel m = trial % 2 ? small_grid_model(rng) : small_cartpole_model(rng);
        for (Eigen::Index i = 0; i < m.params.size(); ++i) m.params[i] = std::ldexp(2 * uniform01(rng) - 1, uniform_int(rng, -30, 30));
        const std::string text = to_checkpoint(m).dump();
        const DynamicsModel back = from_checkpoint(nlohmann::json::parse(text));
        CHECK(bit_equal(m, back));
        CHECK(to_checkpoint(back).dump() == text);
    }
    nlohmann::json j = to_checkpoint(default_grid_model(1));
    j["extra"] = 1;
    CHECK_THROWS_AS(from_checkpoint(j), std::invalid_argument);
    j = to_checkpoint(default_grid_model(1));
    j["params"] = std::vector<double>{1.0, 2.0};
    CHECK_THROWS_AS(from_checkpoint(j), std::invalid_argument);
    j = to_checkpoint(default_grid_model(1));
    j["version"] = 2;
    CHECK_THROWS_AS(from_checkpoint(j), std::invalid_argument);
    CHECK_THROWS_AS(from_checkpoint(nlohmann::json::array()), std::invalid_argument);
}
