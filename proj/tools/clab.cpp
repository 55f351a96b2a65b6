// Command-line front end: run one sweep cell, run a full sweep, analyze a
// stored run, or aggregate a report directory.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "clab/experiment.hpp"

namespace {

int do_run(const std::string& config_path, double lr, std::uint64_t seed) {
    clab::ExperimentConfig config = clab::load_config(config_path);
    clab::RunLog log = clab::run_and_persist(config, lr, seed);
    std::cout << clab::cell_stem(config, lr, seed) << (log.aborted ? " aborted" : " ok")
              << "\n";
    return log.aborted ? 2 : 0;
}

int do_sweep(const std::string& config_path, int jobs) {
    clab::ExperimentConfig config = clab::load_config(config_path);
    clab::SweepSummary s = clab::sweep(config, jobs);
    std::cout << "sweep: " << s.total << " cells, " << s.computed << " computed, " << s.cached
              << " cached, " << s.failed << " failed -> " << s.dir << "\n";
    return s.failed > 0 ? 2 : 0;
}

int do_analyze(const std::string& run_path, const std::string& kind) {
    // run_path is <dir>/<stem> with the .csv suffix optional.
    std::string path = run_path;
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv")
        path = path.substr(0, path.size() - 4);
    auto slash = path.find_last_of('/');
    std::string dir = slash == std::string::npos ? "." : path.substr(0, slash);
    std::string stem = slash == std::string::npos ? path : path.substr(slash + 1);

    clab::ExperimentConfig config = clab::load_config(dir + "/config.json");
    clab::RunLog log = clab::load_runlog(dir, stem);
    clab::analyze_run(config, log, kind, dir, stem);
    std::cout << dir << "/analysis_" << kind << "_" << stem << ".csv\n";
    return 0;
}

int do_report(const std::string& dir) {
    clab::write_report(dir);
    std::cout << dir << "/report_summary.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual-learning lab"};
    app.require_subcommand(1);

    std::string config_path, run_path, kind, dir;
    double lr = 0.01;
    std::uint64_t seed = 11;
    int jobs = 1;

    auto* run = app.add_subcommand("run", "run one (lr, seed) cell");
    run->add_option("--config", config_path)->required();
    run->add_option("--lr", lr)->required();
    run->add_option("--seed", seed)->required();

    auto* sw = app.add_subcommand("sweep", "run every (lr, seed) cell");
    sw->add_option("--config", config_path)->required();
    sw->add_option("--jobs", jobs);

    auto* an = app.add_subcommand("analyze", "analysis records for a stored run");
    an->add_option("--run", run_path)->required();
    an->add_option("--kind", kind)
        ->required()
        ->check(CLI::IsMember({"spectrum", "perturbation", "theorem_checks", "distances"}));

    auto* rep = app.add_subcommand("report", "aggregate a sweep directory");
    rep->add_option("--dir", dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) return do_run(config_path, lr, seed);
        if (sw->parsed()) return do_sweep(config_path, jobs);
        if (an->parsed()) return do_analyze(run_path, kind);
        if (rep->parsed()) return do_report(dir);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
