// Command-line front end: prepare, recover, plot, oracle.
#include "polres/harness.hpp"

#include <CLI11.hpp>

#include <optional>

int main(int argc, char** argv) {
    CLI::App app{"Federated policy resilience experiments"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed_override;
    app.add_option("--seed-override", seed_override, "Run this single seed instead of the configured list");

    std::string config, out, checkpoint, csv;
    auto* prepare = app.add_subcommand("prepare", "Federated preparation; writes a server checkpoint");
    prepare->add_option("--config", config)->required();
    prepare->add_option("--out", out)->required();

    auto* recover = app.add_subcommand("recover", "Diagnosis and recovery runs; writes a CSV of scores");
    recover->add_option("--config", config)->required();
    recover->add_option("--checkpoint", checkpoint)->required();
    recover->add_option("--csv", csv)->required();

    auto* plot = app.add_subcommand("plot", "Render a score CSV as SVG");
    plot->add_option("--csv", csv)->required();
    plot->add_option("--out", out)->required();

    auto* oracle = app.add_subcommand("oracle", "Print the optimal return of each grid deploy point");
    oracle->add_option("--config", config)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (*prepare) return polres::cmd_prepare(config, out, seed_override);
    if (*recover) return polres::cmd_recover(config, checkpoint, csv, seed_override);
    if (*plot) return polres::cmd_plot(csv, out);
    return polres::cmd_oracle(config, seed_override);
}
