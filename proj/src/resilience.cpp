#include "polres/resilience.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace polres {

// ------------------------------------------------------------- imagination

DynamicsFn model_dynamics(DynamicsModel model, bool sample) {
    model.validate();
    if (sample) return [m = std::move(model)](const State& s, int a, Rng& rng) { return predict_next(m, s, a, rng); };
    return [m = std::move(model)](const State& s, int a, Rng&) { return predict_next(m, s, a); };
}

DynamicsFn ensemble_dynamics(EnsembleModel ens) {
    ens.validate();
    return [e = std::move(ens)](const State& s, int a, Rng& rng) { return predict_next_stochastic(e, s, a, rng); };
}

ActionSource from_policy(Policy p) {
    return [p = std::move(p)](int, const State& s, Rng& rng) { return p(s, rng); };
}

ActionSource from_sequence(std::vector<int> actions) {
    return [a = std::move(actions)](int i, const State&, Rng&) { return a.at(static_cast<std::size_t>(i)); };
}

std::vector<ImaginedStep> rollout_imagine(const DynamicsFn& dyn, const EnvRules& rules, const State& s0,
                                          const ActionSource& actions, int depth, Rng& rng) {
    if (depth < 1) throw std::invalid_argument("rollout_imagine: depth must be >= 1");
    std::vector<ImaginedStep> out;
    out.reserve(static_cast<std::size_t>(depth));
    State s = s0;
    int alive = 1;
    for (int i = 0; i < depth; ++i) {
        ImaginedStep st;
        st.s = s;
        st.a = actions(i, s, rng);
        st.s_next = dyn(s, st.a, rng);
        st.reward = rules.reward(s, st.a, st.s_next);
        alive = alive && !rules.terminal(st.s_next);
        st.alive = alive;
        s = st.s_next;
        out.push_back(std::move(st));
    }
    return out;
}

// --------------------------------------------------------------------- MVE

void MveConfig::validate() const {
    if (h < 0 || h > 10) throw std::invalid_argument("MveConfig: h must lie in [0, 10]");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("MveConfig: gamma must lie in (0, 1]");
}

double td_target(const Transition& t, const QFunction& q) {
    if (t.done) return t.reward;
    const int a = q.greedy_action(t.s_next);
    return t.reward + q.gamma * q.target_values(t.s_next)[a];
}

double mve_target(const Transition& t, const DynamicsFn& dyn, const EnvRules& rules, const QFunction& q,
                  const MveConfig& mcfg, Rng& rng) {
    if (t.done) return t.reward;
    // Discounted tail, accumulated so that h = 0 reproduces td_target exactly.
    double tail = 0.0;
    double disc = mcfg.gamma;
    State s = t.s_next;
    for (int i = 1; i <= mcfg.h; ++i) {
        const int a = q.greedy_action(s);
        const State next = dyn(s, a, rng);
        tail += disc * rules.reward(s, a, next);
        disc *= mcfg.gamma;
        if (rules.terminal(next)) return t.reward + tail;
        s = next;
    }
    const int a = q.greedy_action(s);
    tail += disc * q.target_values(s)[a];
    return t.reward + tail;
}

namespace {

Eigen::MatrixXd state_matrix(const std::vector<Transition>& batch, bool next) {
    Eigen::MatrixXd m(kCartpoleStateDim, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t j = 0; j < batch.size(); ++j)
        m.col(static_cast<Eigen::Index>(j)) = std::get<CartpoleState>(next ? batch[j].s_next : batch[j].s).vec();
    return m;
}

std::vector<int> argmax_cols(const Eigen::MatrixXd& v) {
    std::vector<int> out(static_cast<std::size_t>(v.cols()));
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        Eigen::Index best = 0;
        v.col(j).maxCoeff(&best);
        out[static_cast<std::size_t>(j)] = static_cast<int>(best);
    }
    return out;
}

}  // namespace

Eigen::VectorXd mve_targets_batch(const std::vector<Transition>& batch, const DynamicsModel& model,
                                  const EnvRules& rules, const QFunction& q, const MveConfig& mcfg) {
    const auto* net = std::get_if<NetQ>(&q.repr);
    if (!net) throw std::invalid_argument("mve_targets_batch needs a network Q");
    const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
    Eigen::VectorXd tail = Eigen::VectorXd::Zero(B);
    Eigen::VectorXi alive(B);
    for (Eigen::Index j = 0; j < B; ++j) alive[j] = !batch[static_cast<std::size_t>(j)].done;
    Eigen::MatrixXd s = state_matrix(batch, true);
    double disc = mcfg.gamma;
    for (int i = 1; i <= mcfg.h; ++i) {
        const auto a = argmax_cols(net_forward_batch<double>(net->arch, net->params, s));
        const Eigen::MatrixXd next = predict_next_batch(model, s, a);
        for (Eigen::Index j = 0; j < B; ++j) {
            if (!alive[j]) continue;
            const State sj = CartpoleState::from_vec(s.col(j));
            const State nj = CartpoleState::from_vec(next.col(j));
            tail[j] += disc * rules.reward(sj, a[static_cast<std::size_t>(j)], nj);
            alive[j] = !rules.terminal(nj);
        }
        disc *= mcfg.gamma;
        s = next;
    }
    const auto a = argmax_cols(net_forward_batch<double>(net->arch, net->params, s));
    const Eigen::MatrixXd qt = net_forward_batch<double>(net->arch, net->target_params, s);
    Eigen::VectorXd out(B);
    for (Eigen::Index j = 0; j < B; ++j) {
        const double r = batch[static_cast<std::size_t>(j)].reward;
        if (alive[j]) tail[j] += disc * qt(a[static_cast<std::size_t>(j)], j);
        out[j] = r + tail[j];
    }
    return out;
}

// ------------------------------------------------------------ base learners

double evaluate_policy(const Environment& env, const Policy& policy, int episodes, Rng& rng) {
    if (episodes < 1) throw std::invalid_argument("evaluate_policy: episodes must be >= 1");
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) total += run_episode(env, policy, env.step_cap(), rng).total_return;
    return total / episodes;
}

namespace {

class Replay {
public:
    explicit Replay(std::size_t capacity) : cap_(std::max<std::size_t>(1, capacity)) {}
    void push(Transition t) {
        if (data_.size() < cap_) {
            data_.push_back(std::move(t));
        } else {
            data_[next_] = std::move(t);
            next_ = (next_ + 1) % cap_;
        }
    }
    std::size_t size() const { return data_.size(); }
    std::vector<Transition> sample(int n, Rng& rng) const {
        std::vector<Transition> out;
        out.reserve(static_cast<std::size_t>(n));
        std::uniform_int_distribution<std::size_t> d(0, data_.size() - 1);
        for (int i = 0; i < n; ++i) out.push_back(data_[d(rng)]);
        return out;
    }

private:
    std::size_t cap_;
    std::size_t next_ = 0;
    std::vector<Transition> data_;
};

/// Huber-loss regression of Q(s, a) toward fixed targets; one Adam step.
void dqn_update(NetQ& net, AdamState& adam, const std::vector<Transition>& batch, const Eigen::VectorXd& targets,
                double lr) {
    const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
    const Eigen::MatrixXd in = state_matrix(batch, false);
    ForwardCache<double> cache;
    const Eigen::MatrixXd out = net_forward_batch<double>(net.arch, net.params, in, &cache);
    Eigen::MatrixXd dout = Eigen::MatrixXd::Zero(out.rows(), B);
    for (Eigen::Index j = 0; j < B; ++j) {
        const int a = batch[static_cast<std::size_t>(j)].a;
        dout(a, j) = std::clamp(out(a, j) - targets[j], -1.0, 1.0) / static_cast<double>(B);
    }
    const auto back = net_backward_batch<double>(net.arch, net.params, cache, dout);
    auto r = adam_step(adam, net.params, back.param_grad, lr);
    adam = std::move(r.state);
    net.params = std::move(r.params);
}

Eigen::VectorXd td_targets_batch(const std::vector<Transition>& batch, const NetQ& net, double gamma) {
    const Eigen::MatrixXd s = state_matrix(batch, true);
    const auto a = argmax_cols(net_forward_batch<double>(net.arch, net.params, s));
    const Eigen::MatrixXd qt = net_forward_batch<double>(net.arch, net.target_params, s);
    Eigen::VectorXd out(s.cols());
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        const auto& t = batch[static_cast<std::size_t>(j)];
        out[j] = t.done ? t.reward : t.reward + gamma * qt(a[static_cast<std::size_t>(j)], j);
    }
    return out;
}

int epsilon_action(const QFunction& q, const State& s, double eps, Rng& rng) {
    if (uniform01(rng) < eps) return uniform_int(rng, 0, q.num_actions() - 1);
    return q.greedy_action(s);
}

TrainedPolicy train_tabular(const Environment& env, int budget, std::uint64_t seed, const LearnerConfig& lc) {
    if (env.kind() != EnvKind::grid) throw std::invalid_argument("tabular learner needs the grid family");
    QFunction q = make_tabular_q(kGridCells, kGridActions, lc.gamma);
    Rng rng = make_rng(seed, {0x746162ULL});
    for (int ep = 0; ep < budget; ++ep) {
        State s = env.reset(rng);
        for (int t = 0; t < env.step_cap(); ++t) {
            const int a = epsilon_action(q, s, lc.tab_epsilon, rng);
            const Transition tr = env.step(s, a, rng);
            const double target = td_target(tr, q);
            tabular_update(std::get<TabularQ>(q.repr), tr, target, lc.tab_lr);
            if (tr.done) break;
            s = tr.s_next;
        }
    }
    return {greedy_policy(q), q};
}

TrainedPolicy train_dqn(const Environment& env, int budget, std::uint64_t seed, const LearnerConfig& lc) {
    if (env.kind() != EnvKind::cartpole) throw std::invalid_argument("dqn learner needs the cartpole family");
    QFunction q = make_cartpole_q(derive_seed(seed, {0x64716eULL}), lc.hidden, lc.gamma);
    auto& net = std::get<NetQ>(q.repr);
    AdamState adam = AdamState::zeros(net.params.size());
    Replay replay(static_cast<std::size_t>(lc.replay_capacity));
    Rng rng = make_rng(seed, {0x747261ULL});
    Rng eval_rng = make_rng(seed, {0x6576616cULL});
    std::optional<QFunction> best;
    double best_score = -std::numeric_limits<double>::infinity();
    long steps = 0;
    for (int ep = 0; ep < budget; ++ep) {
        State s = env.reset(rng);
        for (int t = 0; t < env.step_cap(); ++t) {
            const double frac = std::min(1.0, static_cast<double>(steps) / std::max(1, lc.eps_decay_steps));
            const double eps = lc.eps_start + frac * (lc.eps_end - lc.eps_start);
            const int a = epsilon_action(q, s, eps, rng);
            Transition tr = env.step(s, a, rng);
            const bool done = tr.done;
            s = tr.s_next;
            replay.push(std::move(tr));
            ++steps;
            if (static_cast<int>(replay.size()) >= lc.warmup) {
                const auto batch = replay.sample(lc.batch, rng);
                dqn_update(net, adam, batch, td_targets_batch(batch, net, q.gamma), lc.lr);
            }
            if (steps % lc.target_sync == 0) net.target_params = net.params;
            if (done) break;
        }
        if ((ep + 1) % lc.eval_every == 0) {
            const double score = evaluate_policy(env, greedy_policy(q), lc.eval_episodes, eval_rng);
            if (score > best_score) {
                best_score = score;
                best = q;
            }
            if (score >= lc.stop_score) break;
        }
    }
    if (best) q = *best;
    std::get<NetQ>(q.repr).target_params = std::get<NetQ>(q.repr).params;
    return {greedy_policy(q), q};
}

}  // namespace

TrainedPolicy train_poisoned_policy(const Environment& env, Learner learner, int budget, std::uint64_t seed,
                                    const LearnerConfig& lcfg) {
    if (budget < 1) throw std::invalid_argument("train_poisoned_policy: budget must be >= 1");
    return learner == Learner::tabular_q ? train_tabular(env, budget, seed, lcfg) : train_dqn(env, budget, seed, lcfg);
}

// ---------------------------------------------------------------- diagnosis

void DiagnosisConfig::validate() const {
    if (n_episodes < 1) throw std::invalid_argument("DiagnosisConfig: n_episodes must be >= 1");
    if (adapt_steps < 1) throw std::invalid_argument("DiagnosisConfig: adapt_steps must be >= 1");
    if (alpha < 0.0 || minibatch < 0) throw std::invalid_argument("DiagnosisConfig: bad alpha or minibatch");
}

TransitionBatch collect_diagnosis(const Environment& deploy, const Policy& poisoned, const DiagnosisConfig& dcfg,
                                  Rng& rng) {
    dcfg.validate();
    TransitionBatch data;
    const Policy behave = epsilon_greedy(poisoned, deploy.num_actions(), dcfg.epsilon);
    for (int e = 0; e < dcfg.n_episodes; ++e) {
        auto trace = run_episode(deploy, behave, deploy.step_cap(), rng);
        for (auto& t : trace.transitions) data.push_back(std::move(t));
    }
    if (data.empty()) throw std::runtime_error("diagnose: empty trace");
    return data;
}

DynamicsModel fine_tune(const DynamicsModel& init, const TransitionBatch& data, const DiagnosisConfig& dcfg, Rng& rng) {
    dcfg.validate();
    if (data.empty()) throw std::invalid_argument("fine_tune: no data");
    if (init.kind != model_kind_for(kind_of(data.front().s))) throw std::invalid_argument("diagnose: model kind does not match env");
    DynamicsModel model = init;
    // A model that never saw data takes its input statistics from the trace.
    if (model.kind == ModelKind::continuous && !model.normalizer) model.normalizer = fit_normalizer(data, model.num_actions());
    const auto mb = static_cast<std::size_t>(dcfg.minibatch);
    if (mb == 0 || mb >= data.size()) return adapt(model, data, dcfg.alpha, dcfg.adapt_steps);
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (int k = 0; k < dcfg.adapt_steps; ++k) {
        TransitionBatch sub;
        for (std::size_t i = 0; i < mb; ++i) {
            const std::size_t j = i + std::uniform_int_distribution<std::size_t>(0, idx.size() - 1 - i)(rng);
            std::swap(idx[i], idx[j]);
            sub.push_back(data[idx[i]]);
        }
        model = adapt(model, sub, dcfg.alpha, 1);
    }
    return model;
}

Diagnosis diagnose(const DynamicsModel& init, const Environment& deploy, const Policy& poisoned,
                   const DiagnosisConfig& dcfg, Rng& rng) {
    if (init.kind != model_kind_for(deploy.kind())) throw std::invalid_argument("diagnose: model kind does not match env");
    Diagnosis d;
    d.data = collect_diagnosis(deploy, poisoned, dcfg, rng);
    d.model = fine_tune(init, d.data, dcfg, rng);
    return d;
}

// ------------------------------------------------------ model-free recovery

void RecoveryConfig::validate() const {
    if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("RecoveryConfig: epsilon outside [0, 1]");
    if (planning_sweeps < 0 || batch < 1 || updates_per_step < 0 || target_sync < 1 || eval_episodes < 0)
        throw std::invalid_argument("RecoveryConfig: bad counts");
}

namespace {

RecoveryResult recover_tabular(QFunction q, const DynamicsModel& model, const Environment& deploy,
                               const MveConfig& mcfg, const RecoveryConfig& rc, int budget,
                               const TransitionBatch& seed_data, Rng& rng) {
    const EnvRules rules = deploy.rules();
    const DynamicsFn dyn = model_dynamics(model, rc.sample_model);
    auto& table = std::get<TabularQ>(q.repr);
    auto update = [&](const Transition& t) { tabular_update(table, t, mve_target(t, dyn, rules, q, mcfg, rng), rc.tab_lr); };
    for (const auto& t : seed_data) update(t);
    RecoveryResult res;
    Rng eval_rng = make_rng(rng());
    for (int ep = 0; ep < budget; ++ep) {
        // Dyna-style sweeps: an imagined first step from every (s, a), then
        // the same value-expansion target, ahead of each real episode.
        for (int sweep = 0; sweep < rc.planning_sweeps; ++sweep)
            for (int i = 0; i < kGridCells; ++i) {
                const State si = GridState::from_index(i);
                if (rules.terminal(si)) continue;
                for (int a = 0; a < kGridActions; ++a) {
                    const State next = dyn(si, a, rng);
                    update(Transition{si, a, next, rules.reward(si, a, next), rules.terminal(next)});
                }
            }
        State s = deploy.reset(rng);
        double ret = 0.0;
        for (int t = 0; t < deploy.step_cap(); ++t) {
            const Transition tr = deploy.step(s, epsilon_action(q, s, rc.epsilon, rng), rng);
            ret += tr.reward;
            update(tr);
            if (tr.done) break;
            s = tr.s_next;
        }
        res.scores.push_back(rc.eval_episodes > 0 ? evaluate_policy(deploy, greedy_policy(q), rc.eval_episodes, eval_rng)
                                                  : ret);
    }
    res.policy = greedy_policy(q);
    res.q = std::move(q);
    return res;
}

RecoveryResult recover_dqn(QFunction q, const DynamicsModel& model, const Environment& deploy, const MveConfig& mcfg,
                           const RecoveryConfig& rc, int budget, const TransitionBatch& seed_data, Rng& rng) {
    const EnvRules rules = deploy.rules();
    auto& net = std::get<NetQ>(q.repr);
    AdamState adam = AdamState::zeros(net.params.size());
    Replay replay(100000);
    for (const auto& t : seed_data) replay.push(t);
    RecoveryResult res;
    Rng eval_rng = make_rng(rng());
    long steps = 0;
    for (int ep = 0; ep < budget; ++ep) {
        State s = deploy.reset(rng);
        double ret = 0.0;
        for (int t = 0; t < deploy.step_cap(); ++t) {
            Transition tr = deploy.step(s, epsilon_action(q, s, rc.epsilon, rng), rng);
            ret += tr.reward;
            const bool done = tr.done;
            s = tr.s_next;
            replay.push(std::move(tr));
            ++steps;
            for (int u = 0; u < rc.updates_per_step; ++u) {
                const auto batch = replay.sample(rc.batch, rng);
                dqn_update(net, adam, batch, mve_targets_batch(batch, model, rules, q, mcfg), rc.lr);
            }
            if (steps % rc.target_sync == 0) net.target_params = net.params;
            if (done) break;
        }
        res.scores.push_back(rc.eval_episodes > 0 ? evaluate_policy(deploy, greedy_policy(q), rc.eval_episodes, eval_rng)
                                                  : ret);
    }
    res.policy = greedy_policy(q);
    res.q = std::move(q);
    return res;
}

}  // namespace

RecoveryResult recover_model_free(const QFunction& q, const DynamicsModel& model, const Environment& deploy,
                                  const MveConfig& mcfg, const RecoveryConfig& rcfg, int budget,
                                  const TransitionBatch& seed_data, Rng& rng) {
    mcfg.validate();
    rcfg.validate();
    q.validate();
    if (budget < 0) throw std::invalid_argument("recover_model_free: negative budget");
    if (model.kind != model_kind_for(deploy.kind())) throw std::invalid_argument("recover_model_free: model kind mismatch");
    if (budget == 0) return {q, greedy_policy(q), {}};
    if (q.tabular()) return recover_tabular(q, model, deploy, mcfg, rcfg, budget, seed_data, rng);
    return recover_dqn(q, model, deploy, mcfg, rcfg, budget, seed_data, rng);
}

// ----------------------------------------------------- model-based recovery

void CemConfig::validate() const {
    if (H < 1 || population < 1 || iterations < 1) throw std::invalid_argument("CemConfig: sizes must be positive");
    if (!(elite_frac > 0.0 && elite_frac <= 1.0)) throw std::invalid_argument("CemConfig: elite_frac outside (0, 1]");
    if (elites() < 2) throw std::invalid_argument("CemConfig: population * elite_frac must be >= 2");
    if (init_std < 0.0) throw std::invalid_argument("CemConfig: negative init_std");
}

int CemConfig::elites() const { return static_cast<int>(std::floor(population * elite_frac + 1e-9)); }

int discretize_action(double u, int num_actions) {
    const int a = static_cast<int>(std::floor(u * num_actions));
    return std::clamp(a, 0, num_actions - 1);
}

CemResult cem_optimize(const SequenceScorer& scorer, const CemConfig& ccfg, int num_actions, Rng& rng,
                       const Eigen::VectorXd* warm_mean) {
    ccfg.validate();
    const int H = ccfg.H;
    const int P = ccfg.population;
    const int E = ccfg.elites();
    CemResult res;
    res.mean = Eigen::VectorXd::Constant(H, ccfg.init_mean);
    if (warm_mean) {
        if (warm_mean->size() != H) throw std::invalid_argument("cem: warm mean has the wrong length");
        res.mean = *warm_mean;
    }
    res.stddev = Eigen::VectorXd::Constant(H, ccfg.init_std);
    const std::uint64_t base = rng();
    Eigen::MatrixXd samples(H, P);
    std::vector<int> order(static_cast<std::size_t>(P));
    for (int it = 0; it < ccfg.iterations; ++it) {
        for (int p = 0; p < P; ++p) {
            Rng sub = make_rng(base, {static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(p)});
            std::normal_distribution<double> n01(0.0, 1.0);
            for (int t = 0; t < H; ++t) samples(t, p) = std::clamp(res.mean[t] + res.stddev[t] * n01(sub), 0.0, 1.0);
        }
        const Eigen::VectorXd scores = scorer(samples);
        if (scores.size() != P) throw std::logic_error("cem: scorer returned the wrong number of scores");
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(H);
        double elite_score = 0.0;
        for (int e = 0; e < E; ++e) {
            mean += samples.col(order[static_cast<std::size_t>(e)]);
            elite_score += scores[order[static_cast<std::size_t>(e)]];
        }
        mean /= E;
        Eigen::VectorXd var = Eigen::VectorXd::Zero(H);
        for (int e = 0; e < E; ++e) var += (samples.col(order[static_cast<std::size_t>(e)]) - mean).array().square().matrix();
        res.history.push_back({scores.mean(), elite_score / E});
        res.mean = mean;
        res.stddev = (var / E).cwiseSqrt();
    }
    res.actions.resize(static_cast<std::size_t>(H));
    for (int t = 0; t < H; ++t) res.actions[static_cast<std::size_t>(t)] = discretize_action(res.mean[t], num_actions);
    return res;
}

SequenceScorer model_scorer(const DynamicsModel& model, const EnvRules& rules, const State& s) {
    if (model.kind != ModelKind::continuous) throw std::invalid_argument("model_scorer needs a continuous model");
    if (rules.kind != EnvKind::cartpole) throw std::invalid_argument("model_scorer needs the cartpole rules");
    const Eigen::Vector4d s0 = std::get<CartpoleState>(s).vec();
    const int na = model.num_actions();
    return [&model, s0, na](const Eigen::MatrixXd& samples) {
        const Eigen::Index P = samples.cols();
        Eigen::MatrixXd states = s0.replicate(1, P);
        Eigen::VectorXd score = Eigen::VectorXd::Zero(P);
        Eigen::ArrayXd alive = Eigen::ArrayXd::Ones(P);
        std::vector<int> actions(static_cast<std::size_t>(P));
        for (Eigen::Index t = 0; t < samples.rows(); ++t) {
            for (Eigen::Index p = 0; p < P; ++p) actions[static_cast<std::size_t>(p)] = discretize_action(samples(t, p), na);
            states = predict_next_batch(model, states, actions);
            // Cartpole rules: +1 for every step that does not end the episode.
            const Eigen::ArrayXd ok = ((states.row(0).array().abs() <= kCartpole.x_limit) &&
                                       (states.row(2).array().abs() <= kCartpole.theta_limit))
                                          .cast<double>()
                                          .transpose();
            alive *= ok;
            score.array() += alive;
        }
        return score;
    };
}

SequenceScorer oracle_scorer(const HyperParams& hp, const State& s) {
    const auto cp = std::get<CartpoleHyperParams>(hp);
    const auto s0 = std::get<CartpoleState>(s);
    return [cp, s0](const Eigen::MatrixXd& samples) {
        Eigen::VectorXd score = Eigen::VectorXd::Zero(samples.cols());
        for (Eigen::Index p = 0; p < samples.cols(); ++p) {
            CartpoleState st = s0;
            for (Eigen::Index t = 0; t < samples.rows(); ++t) {
                const Transition tr = cartpole_step(cp, st, discretize_action(samples(t, p), kCartpoleActions));
                score[p] += tr.reward;
                if (tr.done) break;
                st = std::get<CartpoleState>(tr.s_next);
            }
        }
        return score;
    };
}

CemResult cem_plan(const DynamicsModel& model, const EnvRules& rules, const State& s, const CemConfig& ccfg, Rng& rng) {
    return cem_optimize(model_scorer(model, rules, s), ccfg, model.num_actions(), rng);
}

int mpc_act(const DynamicsModel& model, const EnvRules& rules, const State& s, const CemConfig& ccfg, Rng& rng) {
    return cem_plan(model, rules, s, ccfg, rng).actions.front();
}

Policy mpc_policy(DynamicsModel model, EnvRules rules, CemConfig ccfg) {
    model.validate();
    ccfg.validate();
    return [model = std::move(model), rules, ccfg](const State& s, Rng& rng) { return mpc_act(model, rules, s, ccfg, rng); };
}

DynamicsModel train_poisoned_model(const Environment& env, const ModelLearnerConfig& mcfg, std::uint64_t seed) {
    if (env.kind() != EnvKind::cartpole) throw std::invalid_argument("train_poisoned_model needs the cartpole family");
    Rng rng = make_rng(seed, {0x6d6f64ULL});
    TransitionBatch data;
    const Policy random = uniform_random_policy(env.num_actions());
    for (int e = 0; e < mcfg.episodes; ++e)
        for (auto& t : run_episode(env, random, env.step_cap(), rng).transitions) data.push_back(std::move(t));
    DynamicsModel m = default_cartpole_model(derive_seed(seed, {0x696e6974ULL}), mcfg.hidden);
    m.normalizer = fit_normalizer(data, env.num_actions());
    return fit_model(m, data, mcfg.fit, rng);
}

}  // namespace polres
