// dropout-lab: run the dropout-prediction experiments from a config file.
//
//   dropout-lab <state|exactweek|importance|synth|all> --config <path>
//               [--seed N] [--out DIR] [--classifiers logistic,forest,adaboost]
//               [--no-smote] [--include-dropped-features]
//
// Exit codes: 0 success, 1 unexpected failure, 2 config error, 3 data error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dropout/harness.hpp"

namespace {

using namespace dropout;

void log(const std::string& msg) { std::cerr << "[dropout-lab] " << msg << std::endl; }

int run(const std::string& command, RunConfig cfg) {
    const std::filesystem::path out = cfg.output_dir;
    std::filesystem::create_directories(out);
    {
        std::ofstream os(out / "run_config.txt");
        os << to_text(cfg);
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::to_string(
                   std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count() /
                   1000.0) +
               "s";
    };

    IngestDiagnostics diag;
    const LabeledCohort lc = load_cohort(cfg, &diag);
    log("cohort: " + std::to_string(lc.cohort.users.size()) + " users, " +
        std::to_string(lc.cohort.forum_events.size()) + " forum events, " +
        std::to_string(lc.cohort.activity_events.size()) + " activity events");
    if (diag.duplicate_users) log("warning: " + std::to_string(diag.duplicate_users) + " duplicate user rows ignored");
    if (diag.skipped_unknown_user_events)
        log("warning: " + std::to_string(diag.skipped_unknown_user_events) + " events for unknown users skipped");

    if (command == "synth") {
        write_synthetic(lc, out);
        log("wrote synthetic cohort to " + out.string());
        return 0;
    }

    const FeatureBank bank = FeatureBank::build(lc, cfg.features);
    auto wants = [&](TaskSet t) {
        return command == "all" ? std::find(cfg.tasks.begin(), cfg.tasks.end(), t) != cfg.tasks.end()
                                : (command == "state" && t == TaskSet::state_grid) ||
                                      (command == "exactweek" && t == TaskSet::exactweek_grid) ||
                                      (command == "importance" && t == TaskSet::importance);
    };
    std::size_t violations = 0;
    if (wants(TaskSet::state_grid)) {
        const auto g = run_state_grid(bank, cfg);
        write_grid(g, out, "state");
        for (const auto& c : g.cells) violations += c.report.hygiene.violations;
        log("state grid done (" + std::to_string(g.cells.size()) + " cells, " + elapsed() + ")");
    }
    if (wants(TaskSet::exactweek_grid)) {
        const auto g = run_exactweek_grid(bank, cfg);
        write_grid(g, out, "exactweek");
        for (const auto& c : g.cells) violations += c.report.hygiene.violations;
        log("exact-week grid done (" + std::to_string(g.cells.size()) + " cells, " + elapsed() + ")");
    }
    if (wants(TaskSet::importance)) {
        const auto res = run_importance(bank, cfg);
        write_importance(res.rows, out);
        for (const auto& g : res.grids) {
            write_grid(g, out / "importance_grids", std::string(to_string(g.kind)));
            for (const auto& c : g.cells) violations += c.report.hygiene.violations;
        }
        log("importance done (" + std::to_string(res.rows.size()) + " records, " + elapsed() + ")");
    }
    if (violations) log("warning: " + std::to_string(violations) + " cross-validation hygiene violations");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temporal MOOC dropout prediction experiments"};
    std::string command, config_path, out_dir, classifiers;
    std::optional<std::uint64_t> seed;
    bool no_smote = false, include_dropped = false;
    app.add_option("command", command, "state | exactweek | importance | synth | all")
        ->required()
        ->check(CLI::IsMember({"state", "exactweek", "importance", "synth", "all"}));
    app.add_option("--config", config_path, "key = value run configuration")->required();
    app.add_option("--seed", seed, "master seed (overrides config)");
    app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_option("--classifiers", classifiers, "comma list of logistic, forest, adaboost");
    app.add_flag("--no-smote", no_smote, "disable SMOTE for every task");
    app.add_flag("--include-dropped-features", include_dropped, "keep the features excluded by default");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = load_run_config(config_path);
        if (seed) cfg.seed = *seed;
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (!classifiers.empty()) apply_setting(cfg, "classifiers", classifiers);
        if (no_smote) cfg.smote_state = cfg.smote_exactweek = false;
        if (include_dropped) cfg.features.include_dropped = true;
        cfg.validate();
        return run(command, std::move(cfg));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
