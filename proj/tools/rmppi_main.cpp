// CLI for the residual-planning pipeline: train-dynamics, run, fewshot,
// oracle-check. Exit codes: 0 success, 1 validation error, 2 acceptance
// violation (oracle-check), 3 IO error.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "rmppi/harness.hpp"

namespace {

struct SubArgs {
    CLI::App* app = nullptr;
    std::string config_path;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
};

SubArgs add_subcommand(CLI::App& app, const char* name, const char* help) {
    SubArgs s;
    s.app = app.add_subcommand(name, help);
    s.app->add_option("--config", s.config_path, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    s.seed_opt = s.app->add_option("--seed", s.seed, "override run.seed");
    return s;
}

rmppi::ExperimentConfig load_for(const SubArgs& s) {
    if (s.seed_opt->count() > 0) return rmppi::load_config(s.config_path, &s.seed);
    return rmppi::load_config(s.config_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"residual planning experiment harness"};
    app.set_version_flag("--version", std::string(rmppi::kToolName) + " " + rmppi::kToolVersion);
    app.require_subcommand(1);

    SubArgs train = add_subcommand(app, "train-dynamics",
                                   "collect prior rollouts and train a dynamics model");
    SubArgs run = add_subcommand(app, "run", "receding-horizon episodes with metrics");
    SubArgs fewshot =
        add_subcommand(app, "fewshot", "alternate evaluation runs with online fine-tuning");
    SubArgs oracle =
        add_subcommand(app, "oracle-check", "tabular equivalence sweeps over committed fixtures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        rmppi::CommandResult res;
        if (train.app->parsed()) res = rmppi::cmd_train_dynamics(load_for(train));
        if (run.app->parsed()) res = rmppi::cmd_run(load_for(run));
        if (fewshot.app->parsed()) res = rmppi::cmd_fewshot(load_for(fewshot));
        if (oracle.app->parsed()) res = rmppi::cmd_oracle_check(load_for(oracle));
        if (!res.summary.empty()) std::printf("%s\n", res.summary.c_str());
        return res.exit_code;
    } catch (const rmppi::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const rmppi::ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
