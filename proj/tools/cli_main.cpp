#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "glen/error.hpp"
#include "glen/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"generative document retrieval over learned lexical identifiers"};
    app.require_subcommand(1);

    std::string config_path;
    std::string seed_override;
    std::string phase;
    std::vector<std::string> overrides;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value configuration file");
        cmd->add_option("--set", overrides, "override one config key, e.g. --set beam=50 (repeatable)");
        cmd->add_option("--seed", seed_override, "override the run seed (wins over --set and the file)");
    };

    CLI::App* build = app.add_subcommand("build-index", "extract keyword identifiers for every document");
    CLI::App* train = app.add_subcommand("train", "run one training phase");
    train->add_option("--phase", phase, "keyword or refine")->required();
    CLI::App* assign = app.add_subcommand("assign", "decode an identifier for every document");
    CLI::App* retrieve = app.add_subcommand("retrieve", "rank documents for each query");
    CLI::App* evaluate = app.add_subcommand("evaluate", "score a run file against qrels");
    for (CLI::App* cmd : {build, train, assign, retrieve, evaluate}) add_common(cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        glen::RunConfig config = glen::load_run_config(config_path, overrides, seed_override);
        if (build->parsed()) {
            glen::cmd_build_index(config);
        } else if (train->parsed()) {
            glen::cmd_train(config, phase);
        } else if (assign->parsed()) {
            glen::cmd_assign(config);
        } else if (retrieve->parsed()) {
            glen::cmd_retrieve(config);
        } else {
            glen::cmd_evaluate(config);
        }
    } catch (const glen::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.category().c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
