#include "polres/config.hpp"

#include <fstream>
#include <sstream>

namespace polres {

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::grid_recovery: return "grid_recovery";
        case Scenario::grid_poison_prop: return "grid_poison_prop";
        case Scenario::cartpole_mf: return "cartpole_mf";
        case Scenario::cartpole_mb: return "cartpole_mb";
    }
    return "?";
}

EnvKind env_kind(Scenario s) {
    return s == Scenario::grid_recovery || s == Scenario::grid_poison_prop ? EnvKind::grid : EnvKind::cartpole;
}

std::string to_string(Method m) {
    switch (m) {
        case Method::ours: return "ours";
        case Method::no_resilience: return "no_resilience";
        case Method::isolated_resilience: return "isolated_resilience";
        case Method::no_federation: return "no_federation";
        case Method::fedavg: return "fedavg";
    }
    return "?";
}

namespace {

using nlohmann::json;

/// Reads one JSON object and rejects keys nobody asked for.
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail("expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        used_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            fail(std::string("bad value for '") + key + "'");
        }
    }

    const json* sub(const char* key) {
        if (!j_.contains(key)) return nullptr;
        used_.insert(key);
        return &j_.at(key);
    }

    bool has(const char* key) const { return j_.contains(key); }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) fail("unknown key '" + k + "'");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where_ + ": " + msg); }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> used_;
};

Scenario scenario_from_string(const std::string& s) {
    for (auto v : {Scenario::grid_recovery, Scenario::grid_poison_prop, Scenario::cartpole_mf, Scenario::cartpole_mb})
        if (to_string(v) == s) return v;
    throw ConfigError("unknown scenario '" + s + "'");
}

Method baseline_from_string(const std::string& s) {
    for (auto v : {Method::no_resilience, Method::isolated_resilience, Method::no_federation, Method::fedavg})
        if (to_string(v) == s) return v;
    throw ConfigError("unknown baseline '" + s + "'");
}

void read_fed(const json& j, FedConfig& f) {
    Fields r(j, "fed");
    r.get("K", f.K);
    r.get("rounds", f.rounds);
    r.get("n_interval", f.n_interval);
    r.get("X", f.X);
    r.get("M", f.M);
    r.get("N", f.N);
    r.get("alpha", f.alpha);
    r.get("beta", f.beta);
    r.get("inner_steps", f.inner_steps);
    r.get("local_steps", f.local_steps);
    std::string agg = to_string(f.aggregation);
    r.get("aggregation", agg);
    try {
        f.aggregation = aggregation_from_string(agg);
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    std::string outer = f.outer == OuterOptimizer::adam ? "adam" : "sgd";
    r.get("outer", outer);
    if (outer != "adam" && outer != "sgd") r.fail("outer must be adam or sgd");
    f.outer = outer == "adam" ? OuterOptimizer::adam : OuterOptimizer::sgd;
    r.get("seed", f.seed);
    r.finish();
}

void read_poison(const json& j, PoisonSpec& p) {
    Fields r(j, "poison");
    std::vector<int> targets;
    r.get("targets", targets);
    p.targets = {targets.begin(), targets.end()};
    if (p.targets.size() != targets.size()) r.fail("duplicate targets");
    std::string schedule = "once_at_start";
    r.get("schedule", schedule);
    if (schedule != "once_at_start") r.fail("only once_at_start is supported");
    if (const json* v = r.sub("poisoned_value")) p.poisoned_value = hyperparams_from_json(*v);
    r.finish();
}

void read_diagnosis(const json& j, DiagnosisConfig& d) {
    Fields r(j, "diagnosis");
    r.get("n_episodes", d.n_episodes);
    r.get("adapt_steps", d.adapt_steps);
    r.get("alpha", d.alpha);
    r.get("epsilon", d.epsilon);
    r.get("minibatch", d.minibatch);
    r.finish();
}

void read_mve(const json& j, MveConfig& m) {
    Fields r(j, "mve");
    r.get("h", m.h);
    r.get("gamma", m.gamma);
    r.finish();
}

void read_cem(const json& j, CemConfig& c) {
    Fields r(j, "cem");
    r.get("H", c.H);
    r.get("population", c.population);
    r.get("elite_frac", c.elite_frac);
    r.get("iterations", c.iterations);
    r.get("init_mean", c.init_mean);
    r.get("init_std", c.init_std);
    r.finish();
}

void read_clients(const json& j, ClientSetup& c) {
    Fields r(j, "clients");
    if (const json* v = r.sub("natural")) c.natural = hyperparams_from_json(*v);
    if (const json* v = r.sub("prior")) {
        Fields p(*v, "clients.prior");
        CartpolePrior cp;
        p.get("low", cp.low);
        p.get("high", cp.high);
        p.finish();
        c.prior = cp;
    }
    r.get("behavior_epsilon", c.behavior_epsilon);
    r.finish();
}

void read_victim(const json& j, VictimConfig& v) {
    Fields r(j, "victim");
    r.get("budget", v.budget);
    if (const json* l = r.sub("learner")) {
        Fields f(*l, "victim.learner");
        auto& c = v.learner;
        f.get("gamma", c.gamma);
        f.get("tab_lr", c.tab_lr);
        f.get("tab_epsilon", c.tab_epsilon);
        f.get("hidden", c.hidden);
        f.get("lr", c.lr);
        f.get("batch", c.batch);
        f.get("replay_capacity", c.replay_capacity);
        f.get("warmup", c.warmup);
        f.get("target_sync", c.target_sync);
        f.get("eps_start", c.eps_start);
        f.get("eps_end", c.eps_end);
        f.get("eps_decay_steps", c.eps_decay_steps);
        f.get("eval_every", c.eval_every);
        f.get("eval_episodes", c.eval_episodes);
        f.get("stop_score", c.stop_score);
        f.finish();
    }
    if (const json* m = r.sub("model")) {
        Fields f(*m, "victim.model");
        auto& c = v.model;
        f.get("episodes", c.episodes);
        f.get("epochs", c.fit.epochs);
        f.get("minibatch", c.fit.minibatch);
        f.get("lr", c.fit.lr);
        f.get("hidden", c.hidden);
        f.finish();
    }
    r.finish();
}

void read_recovery(const json& j, RecoverySetup& s) {
    Fields r(j, "recovery");
    auto& c = s.rc;
    r.get("budget", s.budget);
    r.get("epsilon", c.epsilon);
    r.get("tab_lr", c.tab_lr);
    r.get("planning_sweeps", c.planning_sweeps);
    r.get("sample_model", c.sample_model);
    r.get("lr", c.lr);
    r.get("batch", c.batch);
    r.get("updates_per_step", c.updates_per_step);
    r.get("target_sync", c.target_sync);
    r.get("eval_episodes", c.eval_episodes);
    r.finish();
}

}  // namespace

json hyperparams_to_json(const HyperParams& hp) {
    if (const auto* g = std::get_if<GridHyperParams>(&hp)) {
        json j;
        j["elevations"] = std::vector<double>(g->elevations.begin(), g->elevations.end());
        return j;
    }
    return json{{"pole_length", std::get<CartpoleHyperParams>(hp).pole_length}};
}

HyperParams hyperparams_from_json(const json& j) {
    Fields r(j, "hyperparams");
    HyperParams out;
    if (r.has("elevations") == r.has("pole_length")) r.fail("need exactly one of 'elevations' or 'pole_length'");
    if (r.has("elevations")) {
        std::vector<double> e;
        r.get("elevations", e);
        if (e.size() != static_cast<std::size_t>(kGridCells)) r.fail("elevations must hold 25 values");
        GridHyperParams g;
        std::copy(e.begin(), e.end(), g.elevations.begin());
        out = g;
    } else {
        CartpoleHyperParams c;
        r.get("pole_length", c.pole_length);
        out = c;
    }
    r.finish();
    try {
        validate(out);
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    return out;
}

void ExperimentConfig::validate() const {
    auto check = [](auto&& fn) {
        try {
            fn();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    };
    const EnvKind kind = env_kind(scenario);
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (deploy_sweep.empty()) throw ConfigError("deploy_sweep must not be empty");
    for (const auto& hp : deploy_sweep)
        if (kind_of(hp) != kind) throw ConfigError("deploy_sweep entry does not match the scenario's environment");
    if (kind_of(poison.poisoned_value) != kind) throw ConfigError("poisoned_value does not match the scenario's environment");
    if (kind == EnvKind::grid && kind_of(clients.natural) != EnvKind::grid)
        throw ConfigError("clients.natural must be a grid layout");
    if (kind == EnvKind::cartpole) {
        const auto& p = std::get<CartpolePrior>(clients.prior);
        if (!(p.low <= p.high)) throw ConfigError("clients.prior: low > high");
        check([&] { polres::validate(HyperParams{CartpoleHyperParams{p.low}}); });
        check([&] { polres::validate(HyperParams{CartpoleHyperParams{p.high}}); });
    }
    if (!(clients.behavior_epsilon >= 0.0 && clients.behavior_epsilon <= 1.0))
        throw ConfigError("clients.behavior_epsilon outside [0, 1]");
    check([&] { fed.validate(); });
    check([&] { poison.validate(fed.K); });
    check([&] { diagnosis.validate(); });
    check([&] { mve.validate(); });
    check([&] { cem.validate(); });
    check([&] { recovery.rc.validate(); });
    if (recovery.budget < 0) throw ConfigError("recovery.budget must be >= 0");
    if (victim.budget < 1) throw ConfigError("victim.budget must be >= 1");
    if (model_hidden.empty() || model_hidden.size() > 4) throw ConfigError("model.hidden needs 1 to 4 layers");
    for (int h : model_hidden)
        if (h < 1) throw ConfigError("model.hidden sizes must be positive");
    if (scenario == Scenario::cartpole_mb && recovery.budget < 1)
        throw ConfigError("cartpole_mb needs recovery.budget >= 1 evaluation episodes");
}

int ExperimentConfig::victim_index() const { return poison.targets.empty() ? 0 : *poison.targets.begin(); }

ExperimentConfig parse_config(const json& j) {
    Fields r(j, "config");
    ExperimentConfig cfg;
    std::string scen;
    r.get("scenario", scen);
    if (scen.empty()) r.fail("missing 'scenario'");
    cfg.scenario = scenario_from_string(scen);
    if (env_kind(cfg.scenario) == EnvKind::cartpole) {
        cfg.diagnosis.n_episodes = 10;
        cfg.poison.poisoned_value = CartpoleHyperParams{0.5};
    } else {
        cfg.poison.poisoned_value = GridHyperParams{};
    }
    if (const json* v = r.sub("fed")) read_fed(*v, cfg.fed);
    if (const json* v = r.sub("poison")) read_poison(*v, cfg.poison);
    if (const json* v = r.sub("diagnosis")) read_diagnosis(*v, cfg.diagnosis);
    if (const json* v = r.sub("mve")) read_mve(*v, cfg.mve);
    if (const json* v = r.sub("cem")) read_cem(*v, cfg.cem);
    if (const json* v = r.sub("deploy_sweep")) {
        if (!v->is_array()) r.fail("deploy_sweep must be an array");
        for (const auto& e : *v) cfg.deploy_sweep.push_back(hyperparams_from_json(e));
    }
    r.get("seeds", cfg.seeds);
    std::vector<std::string> baselines;
    r.get("baselines", baselines);
    for (const auto& b : baselines) cfg.baselines.insert(baseline_from_string(b));
    if (const json* v = r.sub("model")) {
        Fields m(*v, "model");
        m.get("hidden", cfg.model_hidden);
        m.finish();
    }
    if (const json* v = r.sub("clients")) read_clients(*v, cfg.clients);
    if (const json* v = r.sub("victim")) read_victim(*v, cfg.victim);
    if (const json* v = r.sub("recovery")) read_recovery(*v, cfg.recovery);
    r.finish();
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j);
}

ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed) {
    cfg.seeds = {seed};
    cfg.fed.seed = seed;
    return cfg;
}

}  // namespace polres
