#include "polres/federated.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace polres {

std::string to_string(Aggregation a) {
    switch (a) {
        case Aggregation::meta_first_order: return "meta_first_order";
        case Aggregation::meta_second_order: return "meta_second_order";
        case Aggregation::fedavg: return "fedavg";
        case Aggregation::none: return "none";
    }
    throw std::invalid_argument("unknown aggregation");
}

Aggregation aggregation_from_string(const std::string& s) {
    for (auto a : {Aggregation::meta_first_order, Aggregation::meta_second_order, Aggregation::fedavg, Aggregation::none})
        if (to_string(a) == s) return a;
    throw std::invalid_argument("unknown aggregation: " + s);
}

void FedConfig::validate() const {
    if (K < 1) throw std::invalid_argument("FedConfig: K must be >= 1");
    if (rounds < 0) throw std::invalid_argument("FedConfig: rounds must be >= 0");
    if (n_interval < 1 || X < 0) throw std::invalid_argument("FedConfig: bad collection cadence");
    if (M < 1 || N < 1) throw std::invalid_argument("FedConfig: M and N must be >= 1");
    if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("FedConfig: alpha and beta must be positive");
    if (inner_steps < 1 || local_steps < 1) throw std::invalid_argument("FedConfig: step counts must be >= 1");
    if (aggregation == Aggregation::meta_second_order && inner_steps != 1)
        throw std::invalid_argument("FedConfig: meta_second_order needs inner_steps = 1");
}

BehaviorAgent default_behavior(EnvKind kind) {
    if (kind == EnvKind::grid) return TabularBehavior{};
    return RandomBehavior{};
}

ClientNode make_client(int index, HyperParams hp, const DynamicsModel& shape) {
    Environment env(std::move(hp));
    const EnvKind kind = env.kind();
    if (model_kind_for(kind) != shape.kind) throw std::invalid_argument("make_client: model kind does not match env");
    return ClientNode{index, std::move(env), default_behavior(kind), {}, shape, std::nullopt, 0};
}

namespace {

int behavior_action(BehaviorAgent& agent, const State& s, int num_actions, Rng& rng) {
    if (auto* t = std::get_if<TabularBehavior>(&agent)) {
        if (uniform01(rng) < t->epsilon) return uniform_int(rng, 0, num_actions - 1);
        Eigen::Index best = 0;
        t->q.values.row(std::get<GridState>(s).index()).maxCoeff(&best);
        return static_cast<int>(best);
    }
    return uniform_int(rng, 0, num_actions - 1);
}

void behavior_learn(BehaviorAgent& agent, const Transition& tr) {
    auto* t = std::get_if<TabularBehavior>(&agent);
    if (!t) return;
    const double boot = tr.done ? 0.0 : t->q.values.row(std::get<GridState>(tr.s_next).index()).maxCoeff();
    tabular_update(t->q, tr, tr.reward + t->gamma * boot, t->lr);
}

ParamVector sgd_on(const DynamicsModel& shape, ParamVector params, const EncodedBatch& batch, double lr, int steps) {
    DynamicsModel m = shape;
    for (int k = 0; k < steps; ++k) {
        m.params = params;
        params = sgd_step(params, loss_and_grad(m, batch).grad, lr);
    }
    return params;
}

std::vector<ClientReport> sorted(std::vector<ClientReport> reports) {
    std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    return reports;
}

}  // namespace

ClientNode collect(const ClientNode& node, int count, Rng& rng) {
    ClientNode out = node;
    const int na = out.env.num_actions();
    for (int i = 0; i < count; ++i) {
        if (!out.cursor) {
            out.cursor = out.env.reset(rng);
            out.cursor_steps = 0;
        }
        const int a = behavior_action(out.behavior, *out.cursor, na, rng);
        Transition tr = out.env.step(*out.cursor, a, rng);
        behavior_learn(out.behavior, tr);
        ++out.cursor_steps;
        if (tr.done || out.cursor_steps >= out.env.step_cap())
            out.cursor.reset();
        else
            out.cursor = tr.s_next;
        out.buffer.push_back(std::move(tr));
    }
    return out;
}

ClientRoundResult client_round(const ClientNode& node, const ParamVector& broadcast, const FedConfig& cfg, int round,
                               Rng& rng) {
    if (broadcast.size() != node.local_model.arch.param_count())
        throw std::invalid_argument("client_round: broadcast does not match arch");
    ClientNode out = round % cfg.n_interval == 0 ? collect(node, cfg.X, rng) : node;
    if (static_cast<int>(out.buffer.size()) < cfg.M + cfg.N)
        throw std::runtime_error("client_round: buffer smaller than M + N");

    const auto split = split_support_query(out.buffer, cfg.M, cfg.N, rng);
    DynamicsModel model = out.local_model;
    // Every mode except `none` starts from the broadcast server parameters.
    if (cfg.aggregation != Aggregation::none) model.params = broadcast;
    const EncodedBatch support = encode_batch(model, split.support);
    const EncodedBatch query = encode_batch(model, split.query);

    ClientReport report;
    report.index = out.index;
    if (cfg.aggregation == Aggregation::meta_first_order || cfg.aggregation == Aggregation::meta_second_order) {
        DynamicsModel adapted = model;
        adapted.params = sgd_on(model, model.params, support, cfg.alpha, cfg.inner_steps);
        const LossGrad q = loss_and_grad(adapted, query);
        GradVector g = q.grad;
        if (cfg.aggregation == Aggregation::meta_second_order)
            g -= cfg.alpha * hessian_vector_product(model, support, q.grad);
        report.query_loss = q.loss;
        report.payload = MetaGrad{std::move(g)};
        out.local_model = std::move(adapted);
    } else {
        DynamicsModel trained = model;
        trained.params = sgd_on(model, model.params, support, cfg.alpha, cfg.local_steps);
        report.query_loss = loss_and_grad(trained, query).loss;
        report.payload = AvgParams{trained.params};
        out.local_model = std::move(trained);
    }
    return {std::move(out), std::move(report)};
}

ServerState make_server(DynamicsModel model, const FedConfig& cfg) {
    model.validate();
    ServerState s;
    s.adam = AdamState::zeros(model.params.size());
    s.model = std::move(model);
    s.aggregation = cfg.aggregation;
    s.outer = cfg.outer;
    s.beta = cfg.beta;
    return s;
}

ServerState server_meta_update(const ServerState& server, std::vector<ClientReport> reports) {
    if (reports.empty()) throw std::invalid_argument("server_meta_update: no reports");
    reports = sorted(std::move(reports));
    GradVector mean = GradVector::Zero(server.model.params.size());
    for (const auto& r : reports) {
        const auto* g = std::get_if<MetaGrad>(&r.payload);
        if (!g) throw std::invalid_argument("server_meta_update: payload is not a meta-gradient");
        if (g->grad.size() != mean.size()) throw std::invalid_argument("server_meta_update: gradient size mismatch");
        mean += g->grad;
    }
    mean /= static_cast<double>(reports.size());
    ServerState out = server;
    if (server.outer == OuterOptimizer::adam) {
        auto r = adam_step(server.adam, server.model.params, mean, server.beta);
        out.adam = std::move(r.state);
        out.model.params = std::move(r.params);
    } else {
        out.model.params = sgd_step(server.model.params, mean, server.beta);
    }
    ++out.round;
    return out;
}

ServerState server_fedavg_update(const ServerState& server, std::vector<ClientReport> reports) {
    if (reports.empty()) throw std::invalid_argument("server_fedavg_update: no reports");
    reports = sorted(std::move(reports));
    ParamVector mean = ParamVector::Zero(server.model.params.size());
    for (const auto& r : reports) {
        const auto* p = std::get_if<AvgParams>(&r.payload);
        if (!p) throw std::invalid_argument("server_fedavg_update: payload is not a parameter vector");
        if (p->params.size() != mean.size()) throw std::invalid_argument("server_fedavg_update: size mismatch");
        mean += p->params;
    }
    ServerState out = server;
    out.model.params = mean / static_cast<double>(reports.size());
    ++out.round;
    return out;
}

InputMoments input_moments(const TransitionBatch& batch, int num_actions) {
    const int dim = kCartpoleStateDim + num_actions;
    InputMoments m{0.0, Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim)};
    for (const auto& t : batch) {
        const Eigen::VectorXd x = raw_continuous_input(t.s, t.a, num_actions);
        m.sum += x;
        m.sum_sq += x.cwiseProduct(x);
        m.count += 1.0;
    }
    return m;
}

Normalizer pooled_normalizer(const std::vector<InputMoments>& parts) {
    if (parts.empty()) throw std::invalid_argument("pooled_normalizer: no parts");
    InputMoments total{0.0, Eigen::VectorXd::Zero(parts.front().sum.size()), Eigen::VectorXd::Zero(parts.front().sum.size())};
    for (const auto& p : parts) {
        total.count += p.count;
        total.sum += p.sum;
        total.sum_sq += p.sum_sq;
    }
    if (total.count <= 0.0) throw std::invalid_argument("pooled_normalizer: no samples");
    Normalizer nz;
    nz.mean = total.sum / total.count;
    nz.scale = (total.sum_sq / total.count - nz.mean.cwiseProduct(nz.mean)).cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index i = 0; i < nz.scale.size(); ++i) nz.scale[i] = nz.scale[i] < 1e-6 ? 1.0 : nz.scale[i];
    return nz;
}

PreparationResult run_preparation(ServerState server, std::vector<ClientNode> clients, const FedConfig& cfg) {
    cfg.validate();
    if (clients.empty()) throw std::invalid_argument("run_preparation: no clients");
    for (const auto& c : clients)
        if (c.local_model.kind != server.model.kind || !(c.local_model.arch == server.model.arch))
            throw std::invalid_argument("run_preparation: clients disagree with the server model shape");

    PreparationResult res;
    if (cfg.rounds > 0 && server.model.kind == ModelKind::continuous && !server.model.normalizer) {
        std::vector<InputMoments> parts;
        for (auto& c : clients) {
            Rng rng = make_rng(cfg.seed, {0x6e6f726dULL, static_cast<std::uint64_t>(c.index)});
            c = collect(c, cfg.X, rng);
            parts.push_back(input_moments(c.buffer, c.env.num_actions()));
        }
        server.model.normalizer = pooled_normalizer(parts);
        for (auto& c : clients) c.local_model.normalizer = server.model.normalizer;
    }

    for (int round = 0; round < cfg.rounds; ++round) {
        std::vector<ClientReport> reports;
        reports.reserve(clients.size());
        for (auto& c : clients) {
            Rng rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(c.index)});
            auto r = client_round(c, server.model.params, cfg, round, rng);
            c = std::move(r.node);
            reports.push_back(std::move(r.report));
        }
        double loss = 0.0;
        for (const auto& r : reports) loss += r.query_loss;
        res.log.push_back({round + 1, loss / static_cast<double>(reports.size())});
        switch (cfg.aggregation) {
            case Aggregation::meta_first_order:
            case Aggregation::meta_second_order: server = server_meta_update(server, std::move(reports)); break;
            case Aggregation::fedavg: server = server_fedavg_update(server, std::move(reports)); break;
            case Aggregation::none: ++server.round; break;
        }
    }
    res.server = std::move(server);
    res.clients = std::move(clients);
    return res;
}

void write_loss_log(const std::vector<LossLogRow>& log, Aggregation mode, std::uint64_t seed, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "round,mean_query_loss,aggregation,seed\n" << std::setprecision(17);
    for (const auto& r : log) f << r.round << ',' << r.mean_query_loss << ',' << to_string(mode) << ',' << seed << '\n';
}

}  // namespace polres
