#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "offrl/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"offrl: offline RL pipeline (discretize, train, evaluate, benchmark, report)"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON config; relative paths inside resolve against its directory");
    app.add_option("--seed", seed, "run a single trial with this seed (replaces discretize.seeds and benchmark.seed)");
    app.add_option("--out", out_dir, "output directory (overrides paths.output_dir)");

    auto* discretize = app.add_subcommand("discretize", "fit the clusterer per seed and write the cluster tables");
    auto* train = app.add_subcommand("train", "train one Q-network per trial (resumes from checkpoints)");
    std::optional<long> stop_after;
    train->add_option("--stop-after", stop_after, "stop each trial after this many total steps");
    auto* evaluate = app.add_subcommand("evaluate", "SWDR/MAGIC on the held-out split plus action frequencies");
    auto* benchmark = app.add_subcommand("benchmark", "estimator error against the exact value on a synthetic MDP");
    auto* report = app.add_subcommand("report", "gather plot-ready tables across trials");
    auto* generate = app.add_subcommand("generate", "write a synthetic course-level student CSV");
    std::string csv_out;
    generate->add_option("csv", csv_out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        offrl::PipelineConfig cfg = config_path.empty() ? offrl::config_from_json(nlohmann::json::object())
                                                        : offrl::load_config(config_path);
        if (!out_dir.empty()) cfg.output_dir = std::filesystem::absolute(out_dir).string();
        if (seed) {
            cfg.discretize.seeds = {*seed};
            cfg.benchmark.seed = *seed;
        }
        if (*discretize) offrl::cmd_discretize(cfg);
        else if (*train) offrl::cmd_train(cfg, stop_after);
        else if (*evaluate) offrl::cmd_evaluate(cfg);
        else if (*benchmark) offrl::cmd_benchmark(cfg);
        else if (*report) offrl::cmd_report(cfg);
        else if (*generate) offrl::cmd_generate(cfg, std::filesystem::absolute(csv_out));
    } catch (const offrl::Error& e) {
        std::cerr << "offrl: " << e.what() << '\n';
        return offrl::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "offrl: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
