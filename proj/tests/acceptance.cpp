// End-to-end acceptance run: one PASS/FAIL line per criterion. Exits non-zero
// when any criterion fails. Artifacts land in the working directory.
#include "polres/harness.hpp"
#include "polres/oracle.hpp"
#include "support/oracles.hpp"
#include "support/reference_models.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifndef POLRES_CONFIG_DIR
#error "POLRES_CONFIG_DIR must point at the configs directory"
#endif

using namespace polres;
using namespace polres::testing;

namespace {

const std::string kConfigDir = POLRES_CONFIG_DIR;

constexpr std::uint64_t kKeyVictim = 0xacc1;
constexpr std::uint64_t kKeyDiag = 0xacc2;
constexpr std::uint64_t kKeyRandom = 0xacc3;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// score[method][seed][deploy point] at the last recovery episode
using FinalScores = std::map<std::string, std::map<std::uint64_t, std::map<double, double>>>;

FinalScores final_scores(const std::vector<RunRecord>& records) {
    std::map<std::string, std::map<std::uint64_t, std::map<double, std::pair<int, double>>>> last;
    for (const auto& r : records) {
        auto& slot = last[r.method][r.seed][r.deploy_hyperparam];
        if (r.episode >= slot.first) slot = {r.episode, r.score};
    }
    FinalScores out;
    for (const auto& [m, seeds] : last)
        for (const auto& [s, points] : seeds)
            for (const auto& [x, v] : points) out[m][s][x] = v.second;
    return out;
}

double mean_at(const FinalScores& f, const std::string& method, double x) {
    double sum = 0.0;
    int n = 0;
    for (const auto& [s, points] : f.at(method)) {
        sum += points.at(x);
        ++n;
    }
    return sum / n;
}

double grid_optimum(const ExperimentConfig& cfg) {
    return value_iteration_oracle(std::get<GridHyperParams>(cfg.deploy_sweep.at(0))).optimal_return;
}

std::vector<RunRecord> run_and_save(const ExperimentConfig& cfg, const std::string& stem) {
    auto records = run_scenario_per_seed(cfg);
    write_records_csv(records, stem + ".csv");
    std::ofstream(stem + ".svg") << render_svg(records);
    return records;
}

// ------------------------------------------------------------------ criteria

Outcome gradient_check() {
    const auto t0 = Clock::now();
    Rng rng(2024);
    int cases = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const DynamicsModel c = small_cartpole_model(rng);
        const auto cb = random_cartpole_batch(rng, 6);
        const auto gc = loss_and_grad(c, cb).grad;
        const auto fc = central_difference([&](const std::vector<double>& p) { return reference_mse(c, p, cb); },
                                           to_std(c.params));
        for (std::size_t i = 0; i < fc.size(); ++i) worst = std::max(worst, rel_err(gc[i], fc[i], 1e-4));
        ++cases;

        const DynamicsModel d = small_grid_model(rng);
        const auto db = random_grid_batch(rng, 6);
        const auto gd = loss_and_grad(d, db).grad;
        const auto fd = central_difference([&](const std::vector<double>& p) { return reference_ce(d, p, db); },
                                           to_std(d.params));
        for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, rel_err(gd[i], fd[i], 1e-4));
        ++cases;
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-4 && secs < 5.0,
            std::to_string(cases) + " cases, worst rel err " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome mve_consistency() {
    QFunction q = make_cartpole_q(3, {8}, 0.97);
    auto& net = std::get<NetQ>(q.repr);
    Rng perturb = make_rng(3, {99});
    for (Eigen::Index i = 0; i < net.target_params.size(); ++i) net.target_params[i] += 0.3 * (uniform01(perturb) - 0.5);
    const CartpoleHyperParams hp{0.5};
    const DynamicsFn truth = [hp](const State& s, int a, Rng&) {
        return cartpole_step(hp, std::get<CartpoleState>(s), a).s_next;
    };
    const EnvRules rules{EnvKind::cartpole};
    Rng rng = make_rng(1, {});
    int mismatches = 0, terminals = 0, terminal_bad = 0;
    for (int i = 0; i < 1000; ++i) {
        const CartpoleState s{2.0 * (2 * uniform01(rng) - 1), 1.5 * (2 * uniform01(rng) - 1),
                              0.18 * (2 * uniform01(rng) - 1), 1.5 * (2 * uniform01(rng) - 1)};
        Transition t = cartpole_step(hp, s, uniform_int(rng, 0, 1));
        t.reward = 4.0 * uniform01(rng) - 2.0;
        if (uniform01(rng) < 0.1) t.done = true;
        mismatches += mve_target(t, truth, rules, q, {0, q.gamma}, rng) != td_target(t, q);
        if (t.done) {
            ++terminals;
            for (int h = 0; h <= 5; ++h) terminal_bad += mve_target(t, truth, rules, q, {h, q.gamma}, rng) != t.reward;
        }
    }
    return {mismatches == 0 && terminals > 0 && terminal_bad == 0,
            "1000 transitions, " + std::to_string(mismatches) + " h=0 mismatches, " + std::to_string(terminals) +
                " terminal, " + std::to_string(terminal_bad) + " terminal mismatches"};
}

Outcome cem_quadratic() {
    const auto t0 = Clock::now();
    const CemConfig ccfg;
    const SequenceScorer scorer = [](const Eigen::MatrixXd& u) -> Eigen::VectorXd {
        return -(u.array() - 0.3).square().colwise().sum().transpose();
    };
    Rng rng = make_rng(7, {});
    const CemResult r = cem_optimize(scorer, ccfg, 2, rng);
    const double err = (r.mean.array() - 0.3).abs().maxCoeff();
    const double secs = seconds_since(t0);
    return {err <= 1e-2 && secs < 5.0, "max |mu - 0.3| " + fmt("%.4f", err) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome softmax_sums() {
    Rng rng(11);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const DynamicsModel m = small_grid_model(rng);
        const GridState s{uniform_int(rng, 0, kGridSide - 1), uniform_int(rng, 0, kGridSide - 1)};
        const Eigen::VectorXd p = successor_distribution(m, s, uniform_int(rng, 0, kGridActions - 1));
        worst = std::max(worst, std::abs(p.sum() - 1.0));
    }
    return {worst <= 1e-9, "10000 inputs, worst |sum - 1| " + fmt("%.2e", worst)};
}

Outcome grid_recovery() {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg = load_config(kConfigDir + "/grid_recovery.json");
    const double opt = grid_optimum(cfg);
    const auto f = final_scores(run_and_save(cfg, "acceptance_grid_recovery"));
    const double x = summary_value(cfg.deploy_sweep.at(0));
    const double ours = mean_at(f, "ours", x) / opt;
    const double nofed = mean_at(f, "no_federation", x) / opt;
    const double nores = mean_at(f, "no_resilience", x) / opt;
    int ordered = 0;
    for (std::uint64_t s : cfg.seeds) {
        const double a = f.at("ours").at(s).at(x), b = f.at("no_federation").at(s).at(x),
                     c = f.at("no_resilience").at(s).at(x);
        ordered += a > b && b > c;
    }
    const double secs = seconds_since(t0);
    const bool pass = ours >= 0.9 && nofed < 0.7 && nores < 0.5 && ordered >= 16 && secs < 300.0;
    return {pass, "ours " + fmt("%.3f", ours) + "x, no_federation " + fmt("%.3f", nofed) + "x, no_resilience " +
                      fmt("%.3f", nores) + "x, ordered " + std::to_string(ordered) + "/" +
                      std::to_string(cfg.seeds.size()) + ", " + fmt("%.0f", secs) + " s"};
}

Outcome poison_proportion() {
    const auto t0 = Clock::now();
    const ExperimentConfig half = load_config(kConfigDir + "/grid_poison_50.json");
    const ExperimentConfig full = load_config(kConfigDir + "/grid_poison_100.json");
    const double opt = grid_optimum(half);
    const double x = summary_value(half.deploy_sweep.at(0));

    const auto fh = final_scores(run_and_save(half, "acceptance_grid_poison_50"));
    const double h_meta = mean_at(fh, "ours", x) / opt, h_avg = mean_at(fh, "fedavg", x) / opt;

    const auto ff = final_scores(run_and_save(full, "acceptance_grid_poison_100"));
    int seeds_ok = 0;
    for (std::uint64_t s : full.seeds)
        seeds_ok += ff.at("ours").at(s).at(x) / opt >= 0.8 && ff.at("fedavg").at(s).at(x) / opt < 0.5;
    const double f_meta = mean_at(ff, "ours", x) / opt, f_avg = mean_at(ff, "fedavg", x) / opt;

    const double secs = seconds_since(t0);
    const bool pass = h_meta >= 0.8 && h_avg >= 0.8 && seeds_ok >= 16 && secs < 600.0;
    return {pass, "50%: meta " + fmt("%.3f", h_meta) + "x fedavg " + fmt("%.3f", h_avg) + "x; 100%: meta " +
                      fmt("%.3f", f_meta) + "x fedavg " + fmt("%.3f", f_avg) + "x, seeds meeting both " +
                      std::to_string(seeds_ok) + "/" + std::to_string(full.seeds.size()) + ", " +
                      fmt("%.0f", secs) + " s"};
}

std::string sweep_line(const FinalScores& f, const std::string& method, const std::vector<double>& xs) {
    std::string s = method + " [";
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + fmt("%.0f", mean_at(f, method, xs[i]));
    return s + "]";
}

std::vector<double> sweep_points(const ExperimentConfig& cfg) {
    std::vector<double> xs;
    for (const auto& hp : cfg.deploy_sweep) xs.push_back(summary_value(hp));
    return xs;
}

bool at_edge(double x) { return std::abs(x - 0.1) < 1e-9 || std::abs(x - 0.9) < 1e-9; }

Outcome cartpole_model_based() {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg = load_config(kConfigDir + "/cartpole_mb.json");
    const auto f = final_scores(run_and_save(cfg, "acceptance_cartpole_mb"));
    const auto xs = sweep_points(cfg);
    bool pass = true;
    for (double x : xs) {
        const double ours = mean_at(f, "ours", x);
        if (at_edge(x)) pass = pass && ours >= 350.0 && ours >= mean_at(f, "no_resilience", x) + 100.0;
        else pass = pass && ours >= 450.0;
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 600.0;
    return {pass, sweep_line(f, "ours", xs) + ", " + sweep_line(f, "no_resilience", xs) + ", " + fmt("%.0f", secs) + " s"};
}

Outcome cartpole_model_free() {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg = load_config(kConfigDir + "/cartpole_mf.json");
    const auto f = final_scores(run_and_save(cfg, "acceptance_cartpole_mf"));
    const auto xs = sweep_points(cfg);
    bool pass = true;
    for (double x : xs) {
        const double ours = mean_at(f, "ours", x);
        pass = pass && mean_at(f, "isolated_resilience", x) <= ours;
        if (at_edge(x)) pass = pass && ours >= mean_at(f, "no_resilience", x) + 100.0;
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 600.0;
    return {pass, sweep_line(f, "ours", xs) + ", " + sweep_line(f, "no_resilience", xs) + ", " +
                      sweep_line(f, "isolated_resilience", xs) + ", " + fmt("%.0f", secs) + " s"};
}

Outcome fine_tune_advantage() {
    const ExperimentConfig base = load_config(kConfigDir + "/grid_recovery.json");
    const int n = 10;
    std::vector<int> wins(n, 0);
    std::vector<double> gap(n, 0.0);
    parallel_for(n, [&](int i) {
        const auto seed = static_cast<std::uint64_t>(i);
        const ExperimentConfig cfg = with_seed(base, seed);
        const DynamicsModel server = prepare(cfg, cfg.fed.aggregation).server.model;
        const Environment poisoned(cfg.poison.poisoned_value);
        const Environment deploy(cfg.deploy_sweep.at(0));
        const auto victim = train_poisoned_policy(poisoned, Learner::tabular_q, cfg.victim.budget,
                                                  derive_seed(seed, {kKeyVictim}), cfg.victim.learner);
        Rng rng = make_rng(seed, {kKeyDiag});
        const TransitionBatch data = collect_diagnosis(deploy, victim.policy, cfg.diagnosis, rng);
        DiagnosisConfig wide = cfg.diagnosis;
        wide.n_episodes = 200;
        wide.epsilon = 1.0;
        const TransitionBatch held_out = collect_diagnosis(deploy, victim.policy, wide, rng);
        const DynamicsModel from_meta = fine_tune(server, data, cfg.diagnosis, rng);
        const DynamicsModel from_random =
            fine_tune(fresh_model_like(server, derive_seed(seed, {kKeyRandom})), data, cfg.diagnosis, rng);
        const double a = model_loss(from_meta, held_out), b = model_loss(from_random, held_out);
        wins[static_cast<std::size_t>(i)] = a < b;
        gap[static_cast<std::size_t>(i)] = b - a;
    });
    int won = 0;
    double mean_gap = 0.0;
    for (int i = 0; i < n; ++i) {
        won += wins[static_cast<std::size_t>(i)];
        mean_gap += gap[static_cast<std::size_t>(i)] / n;
    }
    return {won >= 8, "meta init lower held-out loss in " + std::to_string(won) + "/10 seeds, mean gap " +
                          fmt("%.4f", mean_gap)};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome rerun_identical() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::current_path() / "acceptance_rerun";
    fs::create_directories(dir);
    nlohmann::json j;
    std::ifstream(kConfigDir + "/grid_recovery.json") >> j;
    j["fed"]["rounds"] = 40;
    j["seeds"] = {0, 1, 2};
    j["victim"]["budget"] = 300;
    const std::string config = (dir / "small.json").string();
    std::ofstream(config) << j.dump(2);

    std::vector<std::string> csv, svg;
    bool ok = true;
    for (const char* threads : {"1", "2", "1"}) {
        setenv("POLRES_THREADS", threads, 1);
        const std::string tag = std::to_string(csv.size());
        const std::string ckpt = (dir / ("model" + tag + ".json")).string();
        const std::string c = (dir / ("runs" + tag + ".csv")).string();
        const std::string s = (dir / ("plot" + tag + ".svg")).string();
        ok = ok && cmd_prepare(config, ckpt, std::nullopt) == 0;
        ok = ok && cmd_recover(config, ckpt, c, std::nullopt) == 0;
        ok = ok && cmd_plot(c, s) == 0;
        csv.push_back(slurp(c));
        svg.push_back(slurp(s));
    }
    unsetenv("POLRES_THREADS");
    const bool same = csv[0] == csv[1] && csv[1] == csv[2] && svg[0] == svg[1] && svg[1] == svg[2];
    return {ok && same && !csv[0].empty(), std::string("three runs (1, 2, 1 threads): commands ") +
                                               (ok ? "ok" : "failed") + ", CSV and SVG " +
                                               (same ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient finite-difference check", gradient_check},
        {"value expansion at h=0 and terminal targets", mve_consistency},
        {"CEM on a quadratic", cem_quadratic},
        {"softmax normalization", softmax_sums},
        {"grid-world recovery", grid_recovery},
        {"poisoning proportion", poison_proportion},
        {"cartpole model-based recovery", cartpole_model_based},
        {"cartpole model-free recovery", cartpole_model_free},
        {"meta initialization helps fine-tuning", fine_tune_advantage},
        {"byte-identical reruns", rerun_identical},
    };
    // Optional filter: criterion numbers to run, e.g. `acceptance 1 2 10`.
    std::vector<bool> wanted(criteria.size(), argc == 1);
    for (int i = 1; i < argc; ++i) {
        const int k = std::atoi(argv[i]);
        if (k >= 1 && k <= static_cast<int>(criteria.size())) wanted[static_cast<std::size_t>(k - 1)] = true;
    }
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!wanted[i]) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
