#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crowdcount/commands.hpp"
#include "crowdcount/error.hpp"

using namespace crowdcount;

namespace {

// Config file first, then command-line flags on top (flags win).
void add_run_config_flags(CLI::App* cmd, RunConfig& config, std::string& config_path) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--dataset", config.dataset, "dataset directory");
    cmd->add_option("--out", config.out, "output directory");
    cmd->add_option("--seed", config.seed, "RNG seed");
    cmd->add_option("--preset", config.preset, "optimizer preset: paper | toy");
    cmd->add_option("--weights", config.loss_weights, "loss weights w1 w2 w3 w4")->expected(4);
    cmd->add_option("--epochs", [&config](const std::vector<std::string>& v) {
        try {
            config.epochs = std::stoi(v.back());
        } catch (const std::exception&) {
            return false;
        }
        return true;
    }, "epoch budget override");
    cmd->add_option("--patience", [&config](const std::vector<std::string>& v) {
        try {
            config.patience = std::stoi(v.back());
        } catch (const std::exception&) {
            return false;
        }
        return true;
    }, "early-stopping patience override");
    cmd->add_option("--tau", config.tau, "localization threshold");
    cmd->add_option("--radius", config.radius, "matching radius in pixels");
    cmd->add_flag("--drop-l1", [&config](std::int64_t) { config.ablation_mask[0] = false; },
                  "exclude the S1 loss term");
    cmd->add_flag("--drop-l2", [&config](std::int64_t) { config.ablation_mask[1] = false; },
                  "exclude the S2 loss term");
    cmd->add_flag("--drop-l3", [&config](std::int64_t) { config.ablation_mask[2] = false; },
                  "exclude the S3 loss term");
}

RunConfig finalize_run_config(const CLI::App* cmd, RunConfig flag_values,
                              const std::string& config_path) {
    RunConfig config;
    if (!config_path.empty()) config = run_config_from_json_file(config_path);
    // re-apply flags over the file values
    auto passed = [cmd](const std::string& name) { return cmd->count(name) > 0; };
    if (passed("--dataset")) config.dataset = flag_values.dataset;
    if (passed("--out")) config.out = flag_values.out;
    if (passed("--seed")) config.seed = flag_values.seed;
    if (passed("--preset")) config.preset = flag_values.preset;
    if (passed("--weights")) config.loss_weights = flag_values.loss_weights;
    if (passed("--epochs")) config.epochs = flag_values.epochs;
    if (passed("--patience")) config.patience = flag_values.patience;
    if (passed("--tau")) config.tau = flag_values.tau;
    if (passed("--radius")) config.radius = flag_values.radius;
    if (passed("--drop-l1")) config.ablation_mask[0] = false;
    if (passed("--drop-l2")) config.ablation_mask[1] = false;
    if (passed("--drop-l3")) config.ablation_mask[2] = false;
    preset_by_name(config.preset);
    if (config.dataset.empty()) throw ValidationError("missing --dataset (or config key)");
    if (config.out.empty()) throw ValidationError("missing --out (or config key)");
    return config;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-supervised multiscale crowd counting and localization"};
    app.require_subcommand(1);

    // synth
    SynthOptions synth_opts;
    std::string synth_format = "pgm";
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--n", synth_opts.n_scenes, "number of scenes")->required();
    synth->add_option("--width", synth_opts.width, "scene width (divisible by 16)");
    synth->add_option("--height", synth_opts.height, "scene height (divisible by 16)");
    synth->add_option("--min-count", synth_opts.count_range.min, "minimum heads per scene");
    synth->add_option("--max-count", synth_opts.count_range.max, "maximum heads per scene");
    synth->add_option("--seed", synth_opts.seed, "RNG seed");
    synth->add_option("--out", synth_opts.out_dir, "output directory")->required();
    synth->add_option("--image-format", synth_format, "pgm | inline");

    // train / ablate share the run-config surface
    RunConfig train_flags, ablate_flags;
    std::string train_config_path, ablate_config_path;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_run_config_flags(train_cmd, train_flags, train_config_path);
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "loss-term ablation table");
    add_run_config_flags(ablate_cmd, ablate_flags, ablate_config_path);

    // eval
    EvalOptions eval_opts;
    std::string eval_model_config;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--model-config", eval_model_config,
                         "model config JSON (default: model.json next to the checkpoint)");
    eval_cmd->add_option("--dataset", eval_opts.dataset, "dataset directory")->required();
    eval_cmd->add_option("--out", eval_opts.out, "output directory")->required();
    eval_cmd->add_option("--radius", eval_opts.radius, "matching radius in pixels");
    eval_cmd->add_option("--tau", eval_opts.tau, "localization threshold");

    // localize
    LocalizeOptions loc_opts;
    std::string loc_model_config;
    CLI::App* loc_cmd = app.add_subcommand("localize", "emit head detections");
    loc_cmd->add_option("--checkpoint", loc_opts.checkpoint, "checkpoint file")->required();
    loc_cmd->add_option("--model-config", loc_model_config, "model config JSON");
    loc_cmd->add_option("--dataset", loc_opts.dataset, "dataset directory")->required();
    loc_cmd->add_option("--out", loc_opts.out, "output directory")->required();
    loc_cmd->add_option("--tau", loc_opts.tau, "localization threshold");
    loc_cmd->add_option("--split", loc_opts.split, "train | test | all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) {
            if (synth_format == "inline") {
                synth_opts.format = ImageFormat::Inline;
            } else if (synth_format != "pgm") {
                throw ValidationError("--image-format must be pgm or inline");
            }
            run_synth(synth_opts);
        } else if (train_cmd->parsed()) {
            run_train(finalize_run_config(train_cmd, train_flags, train_config_path));
        } else if (ablate_cmd->parsed()) {
            run_ablate(finalize_run_config(ablate_cmd, ablate_flags, ablate_config_path));
        } else if (eval_cmd->parsed()) {
            if (!eval_model_config.empty()) eval_opts.model_config = eval_model_config;
            run_eval(eval_opts);
        } else if (loc_cmd->parsed()) {
            if (!loc_model_config.empty()) loc_opts.model_config = loc_model_config;
            run_localize(loc_opts);
        }
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return 2;
    }
    return 0;
}
