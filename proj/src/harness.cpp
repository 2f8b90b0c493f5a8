#include "polres/harness.hpp"
#include "polres/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace polres {

// ------------------------------------------------------------------ records

namespace {

constexpr const char* kCsvColumns = "scenario,method,seed,client_count,poison_fraction,deploy_hyperparam,episode,score";

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_real(const std::string& s, int line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
        throw CsvError("line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

long long parse_integer(const std::string& s, int line) {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size())
        throw CsvError("line " + std::to_string(line) + ": bad integer '" + s + "'");
    return v;
}

}  // namespace

void write_records(const std::vector<RunRecord>& records, std::ostream& out) {
    out << kCsvMagic << '\n' << kCsvColumns << '\n';
    for (const auto& r : records) {
        if (!std::isfinite(r.score)) throw NumericDivergence("non-finite score in " + r.method);
        out << r.scenario << ',' << r.method << ',' << r.seed << ',' << r.client_count << ','
            << fmt_real(r.poison_fraction) << ',' << fmt_real(r.deploy_hyperparam) << ',' << r.episode << ','
            << fmt_real(r.score) << '\n';
    }
}

void write_records_csv(const std::vector<RunRecord>& records, const std::string& path) {
    std::ostringstream buf;
    write_records(records, buf);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << buf.str();
}

std::vector<RunRecord> read_records(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCsvMagic) throw CsvError("missing '" + std::string(kCsvMagic) + "' header");
    if (!std::getline(in, line) || line != kCsvColumns) throw CsvError("unexpected column header");
    std::vector<RunRecord> out;
    int n = 2;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 8) throw CsvError("line " + std::to_string(n) + ": expected 8 fields");
        RunRecord r;
        r.scenario = f[0];
        r.method = f[1];
        if (r.scenario.empty() || r.method.empty()) throw CsvError("line " + std::to_string(n) + ": empty name");
        const long long seed = parse_integer(f[2], n);
        if (seed < 0) throw CsvError("line " + std::to_string(n) + ": negative seed");
        r.seed = static_cast<std::uint64_t>(seed);
        r.client_count = static_cast<int>(parse_integer(f[3], n));
        r.poison_fraction = parse_real(f[4], n);
        r.deploy_hyperparam = parse_real(f[5], n);
        r.episode = static_cast<int>(parse_integer(f[6], n));
        r.score = parse_real(f[7], n);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RunRecord> read_records_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CsvError("cannot read " + path);
    return read_records(f);
}

// ----------------------------------------------------------------- threads

int thread_count() {
    if (const char* env = std::getenv("POLRES_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, const std::function<void(int)>& fn) {
    const int workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    // Lowest failing index wins so the reported error is schedule-independent.
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ------------------------------------------------------------- preparation

namespace {

constexpr std::uint64_t kKeyInit = 0x696e6974;
constexpr std::uint64_t kKeyNatural = 0x6e6174;
constexpr std::uint64_t kKeyVictim = 0x766963;
constexpr std::uint64_t kKeyDiag = 0x64696167;
constexpr std::uint64_t kKeyRun = 0x72756e;
constexpr std::uint64_t kKeyIsolated = 0x69736f;

void check_log(const PreparationResult& r) {
    for (const auto& row : r.log)
        if (!std::isfinite(row.mean_query_loss))
            throw NumericDivergence("non-finite query loss in round " + std::to_string(row.round));
    if (!r.server.model.params.allFinite()) throw NumericDivergence("non-finite server parameters");
}

}  // namespace

DynamicsModel initial_model(const ExperimentConfig& cfg) {
    const std::uint64_t s = derive_seed(cfg.fed.seed, {kKeyInit});
    return env_kind(cfg.scenario) == EnvKind::grid ? default_grid_model(s) : default_cartpole_model(s, cfg.model_hidden);
}

std::vector<ClientNode> make_clients(const ExperimentConfig& cfg, const DynamicsModel& shape) {
    std::vector<ClientNode> out;
    for (int i = 0; i < cfg.fed.K; ++i) {
        HyperParams natural = cfg.clients.natural;
        if (env_kind(cfg.scenario) == EnvKind::cartpole) {
            Rng rng = make_rng(cfg.fed.seed, {kKeyNatural, static_cast<std::uint64_t>(i)});
            natural = sample_hyperparams(cfg.clients.prior, rng);
        }
        ClientNode node = make_client(i, apply_poison(cfg.poison, i, natural), shape);
        if (auto* tab = std::get_if<TabularBehavior>(&node.behavior)) tab->epsilon = cfg.clients.behavior_epsilon;
        out.push_back(std::move(node));
    }
    return out;
}

PreparationResult prepare(const ExperimentConfig& cfg, Aggregation mode) {
    FedConfig f = cfg.fed;
    f.aggregation = mode;
    const DynamicsModel shape = initial_model(cfg);
    auto res = run_preparation(make_server(shape, f), make_clients(cfg, shape), f);
    check_log(res);
    return res;
}

DynamicsModel local_only_model(const ExperimentConfig& cfg) {
    FedConfig f = cfg.fed;
    f.aggregation = Aggregation::none;
    const DynamicsModel shape = initial_model(cfg);
    auto all = make_clients(cfg, shape);
    std::vector<ClientNode> mine{all[static_cast<std::size_t>(cfg.victim_index())]};
    auto res = run_preparation(make_server(shape, f), std::move(mine), f);
    check_log(res);
    return res.clients.front().local_model;
}

PreparedModels prepare_models(const ExperimentConfig& cfg, std::optional<DynamicsModel> server) {
    PreparedModels m;
    m.server = server ? std::move(*server) : prepare(cfg, cfg.fed.aggregation).server.model;
    if (cfg.baselines.count(Method::fedavg)) m.fedavg = prepare(cfg, Aggregation::fedavg).server.model;
    if (cfg.baselines.count(Method::no_federation)) m.local = local_only_model(cfg);
    return m;
}

// ------------------------------------------------------------------ drivers

namespace {

struct Victim {
    Policy policy;
    std::optional<QFunction> q;
};

Victim train_victim(const ExperimentConfig& cfg, std::uint64_t seed) {
    const Environment env(cfg.poison.poisoned_value);
    const std::uint64_t s = derive_seed(seed, {kKeyVictim});
    switch (cfg.scenario) {
        case Scenario::grid_recovery:
        case Scenario::grid_poison_prop: {
            auto t = train_poisoned_policy(env, Learner::tabular_q, cfg.victim.budget, s, cfg.victim.learner);
            return {t.policy, t.q};
        }
        case Scenario::cartpole_mf: {
            auto t = train_poisoned_policy(env, Learner::dqn, cfg.victim.budget, s, cfg.victim.learner);
            return {t.policy, t.q};
        }
        case Scenario::cartpole_mb: {
            const DynamicsModel m = train_poisoned_model(env, cfg.victim.model, s);
            return {mpc_policy(m, env.rules(), cfg.cem), std::nullopt};
        }
    }
    throw std::logic_error("unknown scenario");
}

std::vector<Method> methods_of(const ExperimentConfig& cfg) {
    std::vector<Method> out{Method::ours};
    for (Method m : {Method::no_resilience, Method::isolated_resilience, Method::no_federation, Method::fedavg})
        if (cfg.baselines.count(m)) out.push_back(m);
    return out;
}

const DynamicsModel& start_model(Method m, const PreparedModels& models, const DynamicsModel& isolated) {
    switch (m) {
        case Method::ours: return models.server;
        case Method::isolated_resilience: return isolated;
        case Method::no_federation:
            if (!models.local) throw std::logic_error("no local model prepared");
            return *models.local;
        case Method::fedavg:
            if (!models.fedavg) throw std::logic_error("no fedavg model prepared");
            return *models.fedavg;
        case Method::no_resilience: break;
    }
    throw std::logic_error("method has no start model");
}

/// Runs of every method at one deploy point for one seed.
std::vector<RunRecord> run_point(const ExperimentConfig& cfg, const PreparedModels& models, const Victim& victim,
                                 std::uint64_t seed, int point) {
    const HyperParams& hp = cfg.deploy_sweep[static_cast<std::size_t>(point)];
    const Environment env(hp);
    const int budget = cfg.recovery.budget;
    const int first = cfg.diagnosis.n_episodes + 1;
    const auto p = static_cast<std::uint64_t>(point);
    const bool mb = cfg.scenario == Scenario::cartpole_mb;
    const int eval_eps = std::max(1, cfg.recovery.rc.eval_episodes);

    RunRecord proto;
    proto.scenario = to_string(cfg.scenario);
    proto.seed = seed;
    proto.client_count = cfg.fed.K;
    proto.poison_fraction = cfg.poison_fraction();
    proto.deploy_hyperparam = summary_value(hp);

    // The poisoned policy gathers the same diagnosis trace for every method.
    std::optional<TransitionBatch> trace;
    auto diagnosis_data = [&]() -> const TransitionBatch& {
        if (!trace) {
            Rng rng = make_rng(seed, {p, kKeyDiag});
            trace = collect_diagnosis(env, victim.policy, cfg.diagnosis, rng);
        }
        return *trace;
    };
    const DynamicsModel isolated = fresh_model_like(models.server, derive_seed(seed, {kKeyIsolated}));

    std::vector<RunRecord> out;
    for (Method m : methods_of(cfg)) {
        Rng rng = make_rng(seed, {p, kKeyRun, static_cast<std::uint64_t>(m)});
        std::vector<double> scores;
        if (m == Method::no_resilience) {
            for (int k = 0; k < budget; ++k)
                scores.push_back(mb ? run_episode(env, victim.policy, env.step_cap(), rng).total_return
                                    : evaluate_policy(env, victim.policy, eval_eps, rng));
        } else {
            const TransitionBatch& data = diagnosis_data();
            const DynamicsModel adapted = fine_tune(start_model(m, models, isolated), data, cfg.diagnosis, rng);
            if (mb) {
                const Policy planner = mpc_policy(adapted, env.rules(), cfg.cem);
                for (int k = 0; k < budget; ++k) scores.push_back(run_episode(env, planner, env.step_cap(), rng).total_return);
            } else {
                scores = recover_model_free(*victim.q, adapted, env, cfg.mve, cfg.recovery.rc, budget, data, rng).scores;
            }
        }
        for (std::size_t k = 0; k < scores.size(); ++k) {
            if (!std::isfinite(scores[k])) throw NumericDivergence("non-finite score for " + to_string(m));
            RunRecord r = proto;
            r.method = to_string(m);
            r.episode = first + static_cast<int>(k);
            r.score = scores[k];
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::vector<RunRecord> run_seeds(const ExperimentConfig& cfg, const PreparedModels& models, bool parallel) {
    const int S = static_cast<int>(cfg.seeds.size());
    const int P = static_cast<int>(cfg.deploy_sweep.size());
    std::vector<std::optional<Victim>> victims(static_cast<std::size_t>(S));
    auto train = [&](int i) { victims[static_cast<std::size_t>(i)] = train_victim(cfg, cfg.seeds[static_cast<std::size_t>(i)]); };
    std::vector<std::vector<RunRecord>> parts(static_cast<std::size_t>(S * P));
    auto task = [&](int t) {
        const int i = t / P;
        parts[static_cast<std::size_t>(t)] =
            run_point(cfg, models, *victims[static_cast<std::size_t>(i)], cfg.seeds[static_cast<std::size_t>(i)], t % P);
    };
    if (parallel) {
        parallel_for(S, train);
        parallel_for(S * P, task);
    } else {
        for (int i = 0; i < S; ++i) train(i);
        for (int t = 0; t < S * P; ++t) task(t);
    }
    std::vector<RunRecord> out;
    for (auto& part : parts)
        for (auto& r : part) out.push_back(std::move(r));
    return out;
}

}  // namespace

std::vector<RunRecord> run_scenario(const ExperimentConfig& cfg, const PreparedModels& models) {
    cfg.validate();
    return run_seeds(cfg, models, true);
}

std::vector<RunRecord> run_scenario_per_seed(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<std::vector<RunRecord>> parts(cfg.seeds.size());
    parallel_for(static_cast<int>(cfg.seeds.size()), [&](int i) {
        const ExperimentConfig one = with_seed(cfg, cfg.seeds[static_cast<std::size_t>(i)]);
        parts[static_cast<std::size_t>(i)] = run_seeds(one, prepare_models(one), false);
    });
    std::vector<RunRecord> out;
    for (auto& part : parts)
        for (auto& r : part) out.push_back(std::move(r));
    return out;
}

// -------------------------------------------------------------------- plots

namespace {

struct Band {
    double mean = 0.0, lo = 0.0, hi = 0.0;
};

struct Series {
    std::string method;
    std::map<double, Band> points;
};

std::string color_of(const std::string& method, std::size_t order) {
    static const std::map<std::string, std::string> fixed{{"ours", "#d62728"},
                                                          {"no_resilience", "#7f7f7f"},
                                                          {"isolated_resilience", "#1f77b4"},
                                                          {"no_federation", "#2ca02c"},
                                                          {"fedavg", "#9467bd"}};
    static const char* extra[] = {"#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#bcbd22"};
    if (auto it = fixed.find(method); it != fixed.end()) return it->second;
    return extra[order % 5];
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

std::vector<Series> series_for(const std::string& scenario, const std::vector<RunRecord>& records) {
    const bool by_episode = scenario.rfind("grid", 0) == 0;
    // method -> x -> values across seeds
    std::map<std::string, std::map<double, std::vector<double>>> values;
    if (by_episode) {
        for (const auto& r : records)
            if (r.scenario == scenario) values[r.method][r.episode].push_back(r.score);
    } else {
        std::map<std::tuple<std::string, double, std::uint64_t>, std::pair<int, double>> last;
        for (const auto& r : records) {
            if (r.scenario != scenario) continue;
            auto key = std::make_tuple(r.method, r.deploy_hyperparam, r.seed);
            auto it = last.find(key);
            if (it == last.end() || r.episode >= it->second.first) last[key] = {r.episode, r.score};
        }
        for (const auto& [key, v] : last) values[std::get<0>(key)][std::get<1>(key)].push_back(v.second);
    }
    std::vector<Series> out;
    for (const auto& [method, xs] : values) {
        Series s{method, {}};
        for (const auto& [x, v] : xs) {
            Band b;
            double sum = 0.0;
            for (double y : v) sum += y;
            b.mean = sum / static_cast<double>(v.size());
            b.lo = *std::min_element(v.begin(), v.end());
            b.hi = *std::max_element(v.begin(), v.end());
            s.points[x] = b;
        }
        out.push_back(std::move(s));
    }
    return out;
}

void panel(std::ostringstream& svg, const std::string& title, const std::string& xlabel,
           const std::vector<Series>& series, double top) {
    constexpr double W = 720, H = 420, L = 70, R = 180, T = 40, B = 50;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool any = false;
    for (const auto& s : series)
        for (const auto& [x, b] : s.points) {
            if (!any) {
                x0 = x1 = x;
                y0 = b.lo;
                y1 = b.hi;
                any = true;
            }
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, b.lo);
            y1 = std::max(y1, b.hi);
        }
    if (x1 - x0 < 1e-12) {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if (y1 - y0 < 1e-12) {
        y0 -= 1.0;
        y1 += 1.0;
    } else {
        const double pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
    }
    const double pw = W - L - R, ph = H - T - B;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + T + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    svg << "<g>\n";
    svg << "<text x=\"" << num(L) << "\" y=\"" << num(top + 24) << "\" font-size=\"16\">" << title << "</text>\n";
    svg << "<rect x=\"" << num(L) << "\" y=\"" << num(top + T) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
        << "\" fill=\"none\" stroke=\"#000\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
        svg << "<line x1=\"" << num(px(xv)) << "\" y1=\"" << num(top + T + ph) << "\" x2=\"" << num(px(xv)) << "\" y2=\""
            << num(top + T + ph + 5) << "\" stroke=\"#000\"/>\n";
        svg << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(top + T + ph + 20)
            << "\" font-size=\"11\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
        svg << "<line x1=\"" << num(L - 5) << "\" y1=\"" << num(py(yv)) << "\" x2=\"" << num(L) << "\" y2=\""
            << num(py(yv)) << "\" stroke=\"#000\"/>\n";
        svg << "<text x=\"" << num(L - 8) << "\" y=\"" << num(py(yv) + 4)
            << "\" font-size=\"11\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
    }
    svg << "<text x=\"" << num(L + pw / 2) << "\" y=\"" << num(top + H - 8) << "\" font-size=\"12\" text-anchor=\"middle\">"
        << xlabel << "</text>\n";
    svg << "<text x=\"16\" y=\"" << num(top + T + ph / 2) << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << num(top + T + ph / 2) << ")\">score</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const std::string c = color_of(s.method, i);
        std::string band, line;
        for (const auto& [x, b] : s.points) band += num(px(x)) + "," + num(py(b.hi)) + " ";
        for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
            band += num(px(it->first)) + "," + num(py(it->second.lo)) + " ";
        for (const auto& [x, b] : s.points) line += num(px(x)) + "," + num(py(b.mean)) + " ";
        if (!band.empty()) band.pop_back();
        if (!line.empty()) line.pop_back();
        svg << "<polygon points=\"" << band << "\" fill=\"" << c << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
        svg << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
        for (const auto& [x, b] : s.points)
            svg << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(b.mean)) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
        const double ly = top + T + 14 + 20.0 * static_cast<double>(i);
        svg << "<rect x=\"" << num(W - R + 14) << "\" y=\"" << num(ly - 9) << "\" width=\"12\" height=\"12\" fill=\"" << c
            << "\"/>\n";
        svg << "<text x=\"" << num(W - R + 32) << "\" y=\"" << num(ly + 1) << "\" font-size=\"12\">" << s.method
            << "</text>\n";
    }
    svg << "</g>\n";
}

}  // namespace

std::string render_svg(const std::vector<RunRecord>& records) {
    std::vector<std::string> scenarios;
    for (const auto& r : records)
        if (std::find(scenarios.begin(), scenarios.end(), r.scenario) == scenarios.end()) scenarios.push_back(r.scenario);
    std::sort(scenarios.begin(), scenarios.end());
    constexpr double kPanel = 420;
    const std::size_t panels = std::max<std::size_t>(1, scenarios.size());
    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"" << num(kPanel * static_cast<double>(panels))
        << "\" font-family=\"sans-serif\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
    if (scenarios.empty()) panel(svg, "no data", "x", {}, 0.0);
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const bool grid = scenarios[i].rfind("grid", 0) == 0;
        panel(svg, scenarios[i], grid ? "episode" : "deploy parameter", series_for(scenarios[i], records),
              kPanel * static_cast<double>(i));
    }
    svg << "</svg>\n";
    return svg.str();
}

// ----------------------------------------------------------------- commands

namespace {

int guarded(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const CsvError& e) {
        std::cerr << "csv error: " << e.what() << '\n';
        return 2;
    } catch (const NumericDivergence& e) {
        std::cerr << "numeric divergence: " << e.what() << '\n';
        return 3;
    } catch (const CheckpointMismatch& e) {
        std::cerr << "checkpoint mismatch: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed_override) {
    ExperimentConfig cfg = load_config(path);
    return seed_override ? with_seed(cfg, *seed_override) : cfg;
}

}  // namespace

std::string loss_log_path(const std::string& checkpoint) {
    std::filesystem::path p(checkpoint);
    p.replace_extension(".loss.csv");
    return p.string();
}

int cmd_prepare(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed_override) {
    return guarded([&] {
        const ExperimentConfig cfg = load(config, seed_override);
        const PreparationResult res = prepare(cfg, cfg.fed.aggregation);
        save_checkpoint(res.server.model, out);
        write_loss_log(res.log, cfg.fed.aggregation, cfg.fed.seed, loss_log_path(out));
        return 0;
    });
}

int cmd_recover(const std::string& config, const std::string& checkpoint, const std::string& csv,
                std::optional<std::uint64_t> seed_override) {
    return guarded([&] {
        const ExperimentConfig cfg = load(config, seed_override);
        DynamicsModel server;
        try {
            server = load_checkpoint(checkpoint);
        } catch (const std::exception& e) {
            throw CheckpointMismatch(e.what());
        }
        const DynamicsModel expect = initial_model(cfg);
        if (server.kind != expect.kind || server.arch.input_dim != expect.arch.input_dim ||
            server.arch.output_dim != expect.arch.output_dim)
            throw CheckpointMismatch("checkpoint does not describe a " + to_string(env_kind(cfg.scenario)) + " model");
        if (!server.params.allFinite()) throw NumericDivergence("checkpoint holds non-finite parameters");
        const auto records = run_scenario(cfg, prepare_models(cfg, server));
        write_records_csv(records, csv);
        return 0;
    });
}

int cmd_plot(const std::string& csv, const std::string& out) {
    return guarded([&] {
        const std::string svg = render_svg(read_records_csv(csv));
        std::ofstream f(out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + out);
        f << svg;
        return 0;
    });
}

int cmd_oracle(const std::string& config, std::optional<std::uint64_t> seed_override) {
    return guarded([&] {
        const ExperimentConfig cfg = load(config, seed_override);
        if (env_kind(cfg.scenario) != EnvKind::grid) throw ConfigError("oracle needs a grid scenario");
        for (std::size_t j = 0; j < cfg.deploy_sweep.size(); ++j) {
            const auto r = value_iteration_oracle(std::get<GridHyperParams>(cfg.deploy_sweep[j]));
            std::printf("deploy %zu optimal_return %.10f\n", j, r.optimal_return);
        }
        return 0;
    });
}

}  // namespace polres
