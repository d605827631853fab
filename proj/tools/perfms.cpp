#include "perfms/cli_experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace perfms;

namespace {

struct Flag {
    const char* name;
    const char* section;
    const char* key;
    const char* help;
};

const Flag flags[] = {
    {"--geometry", "mesh", "geometry", "built-in name (empty, small-inclusions, big-inclusions) or circle file"},
    {"--n", "mesh", "n", "coarse elements per side"},
    {"--levels", "mesh", "levels", "fine refinement levels per coarse element"},
    {"--operator", "operator", "kind", "laplace, elasticity or stokes"},
    {"--basis", "offline", "basis", "offline basis functions per neighborhood"},
    {"--theta", "online", "theta", "marking fraction (default 0.7)"},
    {"--indicator", "online", "indicator", "ind1 or ind2"},
    {"--adaptive", "online", "adaptive", "true: mark by the indicator; false: enrich every neighborhood"},
    {"--iters", "online", "iters", "online iterations"},
    {"--tol", "online", "tol", "stop once the indicator sum is below this"},
    {"--reference", "online", "reference", "error reference: fine, snapshot or none"},
    {"--load", "online", "load", "assembled, or snapshot (load resolved by the snapshot space)"},
    {"--snapshots", "snapshots", "mode", "standard or randomized"},
    {"--rand-count", "snapshots", "rand_count", "randomized target count n (n + 4 solves)"},
    {"--oversample", "snapshots", "oversample", "oversampling layers (default 4)"},
    {"--seed", "snapshots", "seed", "random seed"},
    {"--threads", "run", "threads", "worker threads"},
    {"--out", "run", "out", "output directory"},
    {"--solver", "run", "solver", "fine solver: direct or cg"},
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiscale finite elements on perforated domains"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "key = value config file with [sections]");
    std::vector<std::string> values(std::size(flags));
    std::vector<CLI::Option*> opts;
    for (std::size_t i = 0; i < std::size(flags); ++i) opts.push_back(app.add_option(flags[i].name, values[i], flags[i].help));

    auto* mesh = app.add_subcommand("mesh", "write the fine mesh");
    auto* fine = app.add_subcommand("solve-fine", "solve the fine reference problem and export it");
    auto* offline = app.add_subcommand("offline", "build snapshots and the offline space (needs the mesh artifact)");
    auto* online = app.add_subcommand("online", "online enrichment from the offline artifact; writes online.csv");
    auto* report = app.add_subcommand("report", "summarise online.csv");
    auto* preset = app.add_subcommand("preset", "run a named study");
    std::string preset_name;
    preset->add_option("name", preset_name, "elasticity-table, stokes-table or stokes-randomized")
        ->required()
        ->check(CLI::IsMember(preset_names()));
    auto* dump = app.add_subcommand("config", "print the effective configuration");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig c;
        std::vector<std::string> given;
        if (!config_path.empty()) c = load_config(config_path, c, &given);
        for (std::size_t i = 0; i < std::size(flags); ++i)
            if (opts[i]->count()) {
                set_config_value(c, flags[i].section, flags[i].key, values[i]);
                given.push_back(flags[i].key);
            }
        if (preset->parsed()) c = preset_config(preset_name, c, given);
        c.validate();
        std::string msg;
        if (mesh->parsed()) msg = stage_mesh(c);
        else if (fine->parsed()) msg = stage_solve_fine(c);
        else if (offline->parsed()) msg = stage_offline(c);
        else if (online->parsed()) msg = stage_online(c);
        else if (report->parsed()) msg = stage_report(c);
        else if (preset->parsed()) msg = run_preset(preset_name, c);
        else if (dump->parsed()) msg = serialize_config(c);
        std::cout << msg << (msg.empty() || msg.back() == '\n' ? "" : "\n");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
