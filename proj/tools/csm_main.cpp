#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csm/runs.hpp"
#include "csm/simulator.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::string preset = "desk";
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "flat key=value config file");
    cmd->add_option("--preset", opts.preset, "named preset: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--set", opts.overrides, "override one config key, e.g. --set train.epochs=5");
    cmd->add_option("--seed", opts.seed, "override every seed (synth, split, training)")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
}

csm::RunConfig build_config(const CommonOptions& opts) {
    csm::RunConfig config = csm::preset_config(opts.preset);
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw std::runtime_error("cannot open config: " + opts.config_path);
        config = csm::load_run_config(in, config);
    }
    for (const std::string& kv : opts.overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("--set expects key=value, got: " + kv);
        }
        csm::apply_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (opts.seed_set) {
        config.sim.seed = opts.seed;
        config.split_seed = opts.seed;
        config.train_seed = opts.seed;
    }
    return config;
}

std::vector<std::uint64_t> parse_id_list(const std::string& text) {
    std::vector<std::uint64_t> ids;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) ids.push_back(std::stoull(item));
    }
    return ids;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"click sequence model toolkit"};
    app.require_subcommand(1);

    CommonOptions synth_opts, stats_opts, train_opts, predict_opts, eval_opts;

    CLI::App* synth = app.add_subcommand("synth", "synthesize a session log from the simulator");
    add_common(synth, synth_opts);
    std::string sim_config_path;
    synth->add_option("--sim-config", sim_config_path,
                      "standalone simulator config file (overrides the synth.* keys)");

    CLI::App* stats = app.add_subcommand("stats", "click count/order histogram of a session log");
    add_common(stats, stats_opts);

    CLI::App* train = app.add_subcommand("train", "build pattern stats and train the model");
    add_common(train, train_opts);

    CLI::App* predict = app.add_subcommand("predict", "top-K click sequences for one SERP");
    add_common(predict, predict_opts);
    std::uint64_t query_id = 0;
    std::string results_text;
    predict->add_option("--query", query_id, "query id")->required();
    predict->add_option("--results", results_text, "comma-separated result doc ids (10)")->required();

    CLI::App* eval = app.add_subcommand("eval", "run the full evaluation suite");
    add_common(eval, eval_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            csm::RunConfig config = build_config(synth_opts);
            if (!sim_config_path.empty()) {
                std::ifstream in(sim_config_path);
                if (!in) throw std::runtime_error("cannot open simulator config: " + sim_config_path);
                const std::uint64_t keep_seed = synth_opts.seed_set ? synth_opts.seed : 0;
                config.sim = csm::load_simulator_config(in);
                if (synth_opts.seed_set) config.sim.seed = keep_seed;
            }
            csm::run_synth(config, std::cout);
        } else if (stats->parsed()) {
            csm::run_stats(build_config(stats_opts), std::cout);
        } else if (train->parsed()) {
            csm::TrainOutcome outcome = csm::run_train(build_config(train_opts), std::cout);
            if (outcome.diverged) return 2;
        } else if (predict->parsed()) {
            csm::run_predict(build_config(predict_opts), query_id, parse_id_list(results_text),
                             std::cout);
        } else if (eval->parsed()) {
            csm::run_eval(build_config(eval_opts), std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
