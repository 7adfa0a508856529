// nmqsd: experiment runner for the non-Markovian quantum state diffusion
// library. Exit codes: 0 success, 2 configuration error, 3 check failure,
// 4 numerical fault.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nmqsd/experiments.hpp"

namespace {

using namespace nmqsd;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCheckFailed = 3;
constexpr int kExitNumerical = 4;

void apply_set_overrides(ExperimentParams& params, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got: " + kv);
        const std::string key = kv.substr(0, eq);
        double value = 0.0;
        try {
            value = std::stod(kv.substr(eq + 1));
        } catch (const std::exception&) {
            throw ConfigError("--set " + key + ": not a number: " + kv.substr(eq + 1));
        }
        apply_override(params, key, value);
    }
}

Json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open: " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return j;
}

int report_and_exit_code(const ExperimentOutcome& outcome, const std::string& out_dir) {
    for (const auto& c : outcome.checks)
        std::printf("[%s] %s  value=%.6g threshold=%.6g\n", c.passed ? "PASS" : "FAIL",
                    c.name.c_str(), c.value, c.threshold);
    std::printf("%s: %zu files written to %s\n", outcome.experiment.c_str(),
                outcome.files.size(), out_dir.c_str());
    return outcome.all_passed() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"non-Markovian quantum state diffusion experiment runner"};
    app.require_subcommand(1);

    // run
    std::string experiment;
    std::vector<std::string> sets;
    std::string out_dir = "out";
    double seed_flag = -1.0;
    double paths_flag = -1.0;
    auto* run = app.add_subcommand("run", "run a named experiment");
    run->add_option("experiment", experiment, "one of: fig1a fig1b fig2 cut markov_limit noise_stats")
        ->required();
    run->add_option("--set", sets, "override a parameter, key=value (repeatable)");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed_flag, "global seed");
    run->add_option("--paths", paths_flag, "number of trajectories");

    // validate
    std::string config_path;
    auto* validate = app.add_subcommand("validate", "validate an experiment config file");
    validate->add_option("config", config_path, "config JSON")->required();

    // replay
    std::string manifest_path;
    std::string replay_out = "replay_out";
    auto* replay = app.add_subcommand("replay", "re-run an experiment from its manifest");
    replay->add_option("manifest", manifest_path, "manifest JSON")->required();
    replay->add_option("--out", replay_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (run->parsed()) {
            ExperimentParams params = preset_params(experiment);
            apply_set_overrides(params, sets);
            if (seed_flag >= 0.0) params.seed = seed_flag;
            if (paths_flag >= 0.0) params.n_paths = paths_flag;
            validate_params(experiment, params);
            const auto outcome = run_experiment(experiment, params, out_dir);
            return report_and_exit_code(outcome, out_dir);
        }
        if (validate->parsed()) {
            const auto [name, params] = params_from_config(load_json(config_path));
            std::cout << make_manifest(name, params).dump(2) << "\n";
            return kExitOk;
        }
        if (replay->parsed()) {
            const auto [name, params] = params_from_manifest(load_json(manifest_path));
            const auto outcome = run_experiment(name, params, replay_out);
            return report_and_exit_code(outcome, replay_out);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical fault: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitConfig;
}
