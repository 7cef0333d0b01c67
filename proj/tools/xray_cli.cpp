// xray: command-line front end for the anomaly-detection pipeline.
//
// Subcommands mirror the pipeline stages: split, preprocess, train, score,
// evaluate, heatmap. Exit status: 0 success, 1 validation error, 2 runtime
// failure.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "xray/cli.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string data_root;
    std::string output_root;
    std::string model;
    std::string variant;
    std::string equalize;
    std::string policy;
    std::vector<std::string> metrics;
    std::vector<uint32_t> seeds;
    int workers = 0;
    bool flip_scores = false;
    bool grid = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "configuration file (key = value lines)");
    cmd->add_option("--data-root", args.data_root, "dataset root directory");
    cmd->add_option("--output-root", args.output_root, "output directory");
    cmd->add_option("--model", args.model, "model kind: cae|bae|vae|dcgan|bigan|alphagan");
    cmd->add_option("--variant", args.variant, "preprocessing variant: raw|crop|full");
    cmd->add_option("--equalize", args.equalize, "histogram equalization: on|off");
    cmd->add_option("--policy", args.policy, "augmentation policy: default|advanced|none");
    cmd->add_option("--metric", args.metrics, "anomaly score metric (repeatable)");
    cmd->add_option("--seed", args.seeds, "random seed (repeatable)");
    cmd->add_option("--workers", args.workers, "worker thread count");
    cmd->add_flag("--flip-scores", args.flip_scores, "flip the anomaly decision");
    cmd->add_flag("--grid", args.grid, "evaluate the full variant/equalization grid");
}

xray::cli::RunConfig build_config(const CommonArgs& args) {
    xray::cli::RunConfig config;
    if (!args.config_path.empty()) {
        config = xray::cli::load_run_config(args.config_path);
    } else if (!args.model.empty()) {
        config = xray::cli::default_run_config(args.model);
    }
    if (!args.model.empty() && args.config_path.empty()) config.model = args.model;
    if (!args.model.empty() && !args.config_path.empty() && args.model != config.model) {
        // flag overrides the file, defaults re-derived for the new family
        auto fresh = xray::cli::default_run_config(args.model);
        fresh.data_root = config.data_root;
        fresh.output_root = config.output_root;
        fresh.variant = config.variant;
        fresh.equalize = config.equalize;
        fresh.seeds = config.seeds;
        fresh.workers = config.workers;
        config = fresh;
    }
    if (!args.data_root.empty()) config.data_root = args.data_root;
    if (!args.output_root.empty()) config.output_root = args.output_root;
    if (!args.variant.empty()) config.variant = args.variant;
    if (!args.equalize.empty()) config.equalize = (args.equalize == "on");
    if (!args.policy.empty()) config.policy = args.policy;
    if (!args.metrics.empty()) config.metrics = args.metrics;
    if (!args.seeds.empty()) config.seeds = args.seeds;
    if (args.workers > 0) config.workers = args.workers;
    if (args.flip_scores) config.flip_scores = true;
    if (args.grid) config.grid = true;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"unsupervised anomaly detection for hand X-ray images"};
    app.require_subcommand(1);

    CommonArgs args;
    bool force = false;
    std::string part = "test";
    std::string heatmap_id;
    bool verbose = false;

    CLI::App* split = app.add_subcommand("split", "patient-level train/validation/test split");
    add_common(split, args);

    CLI::App* preprocess = app.add_subcommand("preprocess", "offline preprocessing to disk");
    add_common(preprocess, args);
    preprocess->add_flag("--force", force, "reprocess existing outputs");

    CLI::App* train = app.add_subcommand("train", "train one model per seed");
    add_common(train, args);
    train->add_flag("--verbose", verbose, "log per-epoch losses");

    CLI::App* score = app.add_subcommand("score", "compute anomaly scores");
    add_common(score, args);
    score->add_option("--part", part, "split part: train|validation|test");

    CLI::App* evaluate = app.add_subcommand("evaluate", "ROC-AUC report over seeds");
    add_common(evaluate, args);

    CLI::App* heatmap = app.add_subcommand("heatmap", "reconstruction-error overlay for one image");
    add_common(heatmap, args);
    heatmap->add_option("--id", heatmap_id, "image id from the offline manifest")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        xray::cli::RunConfig config = build_config(args);
        if (split->parsed()) return xray::cli::cmd_split(config);
        if (preprocess->parsed()) return xray::cli::cmd_preprocess(config, force);
        if (train->parsed()) return xray::cli::cmd_train(config, verbose ? &std::cerr : nullptr);
        if (score->parsed()) return xray::cli::cmd_score(config, part);
        if (evaluate->parsed()) return xray::cli::cmd_evaluate(config);
        if (heatmap->parsed()) return xray::cli::cmd_heatmap(config, heatmap_id);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
