// Command-line front end: stab eigs|simulate|convergence|cost --config <file>

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stab/experiments.hpp"

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, numerical_failure = 3 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feedback stabilization of a coupled parabolic system (P1 FEM, projected Riccati)"};
    app.require_subcommand(1);

    std::string config_path, precision, dump_dir;
    bool controlled = false;
    std::optional<int> level;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config file")->required();
        sub->add_option("--precision", precision, "'full' for round-trip CSV output")
            ->check(CLI::IsMember({"full", "default"}));
    };
    auto* eigs = app.add_subcommand("eigs", "eigenvalue convergence table (eigs.csv)");
    auto* sim = app.add_subcommand("simulate", "energy time series (energy_*.csv)");
    auto* conv = app.add_subcommand("convergence", "inter-level errors of the stabilized solution (table2.csv)");
    auto* cost = app.add_subcommand("cost", "finite-horizon cost per level (cost.csv)");
    for (auto* s : {eigs, sim, conv, cost}) add_common(s);
    sim->add_flag("--controlled", controlled, "apply the Riccati feedback");
    for (auto* s : {sim, cost}) s->add_option("--level", level, "run a single level");
    for (auto* s : {sim, conv, cost}) s->add_option("--dump-riccati", dump_dir, "write Au, Bu, Qu, P as MatrixMarket");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config_error;
    }

    try {
        const stab::ExperimentConfig cfg = stab::load_config(config_path);
        stab::OutputOptions io;
        if (precision == "full") io.precision = 17;
        io.dump_riccati = dump_dir;
        if (eigs->parsed()) stab::cmd_eigs(cfg, io);
        else if (sim->parsed()) stab::cmd_simulate(cfg, controlled, level, io);
        else if (conv->parsed()) stab::cmd_convergence(cfg, io);
        else if (cost->parsed()) stab::cmd_cost(cfg, level, io);
    } catch (const stab::InvalidInput& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return config_error;
    } catch (const stab::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return numerical_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failure;
    }
    return ok;
}
