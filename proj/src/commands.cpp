#include "crowdcount/commands.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "crowdcount/eval.hpp"
#include "crowdcount/report.hpp"
#include "crowdcount/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace crowdcount {

namespace {

// Distinct stream for epoch shuffling so it never aliases the init draws.
constexpr std::uint64_t kShuffleSalt = 0x9e3779b97f4a7c15ULL;

std::string scene_basename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%04d", index);
    return buf;
}

Model load_model(const fs::path& checkpoint, const std::optional<fs::path>& model_config) {
    const fs::path cfg_path =
        model_config.value_or(checkpoint.parent_path() / "model.json");
    std::ifstream in(cfg_path);
    if (!in) throw ValidationError("cannot open model config: " + cfg_path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Model model = Model::build(ModelConfig::from_json(text), 0);
    model.params().load(checkpoint);
    return model;
}

TrainOptions make_train_options(const RunConfig& config) {
    const OptimizerPreset preset = preset_by_name(config.preset);
    TrainOptions opts;
    opts.adam = preset.adam;
    opts.epochs = config.epochs.value_or(preset.epochs);
    opts.patience = config.patience.value_or(preset.patience);
    opts.loss_weights = config.effective_weights();
    opts.shuffle_seed = config.seed ^ kShuffleSalt;
    return opts;
}

struct TrainedRun {
    Model model;
    TrainResult result;
};

TrainedRun train_once(const RunConfig& config, const Dataset& dataset,
                      const std::array<double, 4>& weights) {
    Model model = Model::build(config.model, config.seed);
    TrainOptions opts = make_train_options(config);
    opts.loss_weights = weights;
    TrainResult result = train(model, dataset.train, dataset.test, opts);
    return {std::move(model), std::move(result)};
}

} // namespace

std::array<double, 4> RunConfig::effective_weights() const {
    std::array<double, 4> w = loss_weights;
    for (int j = 0; j < 3; ++j)
        if (!ablation_mask[j]) w[j] = 0.0;
    return w;
}

void merge_config_json(RunConfig& config, const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
        if (doc.contains("dataset")) config.dataset = doc.at("dataset").get<std::string>();
        if (doc.contains("out")) config.out = doc.at("out").get<std::string>();
        if (doc.contains("preset")) doc.at("preset").get_to(config.preset);
        if (doc.contains("seed")) doc.at("seed").get_to(config.seed);
        if (doc.contains("loss_weights")) doc.at("loss_weights").get_to(config.loss_weights);
        if (doc.contains("ablation")) {
            const json& ab = doc.at("ablation");
            if (ab.contains("l4"))
                throw ValidationError("ablation mask covers l1..l3 only; l4 cannot be disabled");
            if (ab.contains("l1")) ab.at("l1").get_to(config.ablation_mask[0]);
            if (ab.contains("l2")) ab.at("l2").get_to(config.ablation_mask[1]);
            if (ab.contains("l3")) ab.at("l3").get_to(config.ablation_mask[2]);
        }
        if (doc.contains("tau")) doc.at("tau").get_to(config.tau);
        if (doc.contains("radius")) doc.at("radius").get_to(config.radius);
        if (doc.contains("epochs")) config.epochs = doc.at("epochs").get<int>();
        if (doc.contains("patience")) config.patience = doc.at("patience").get<int>();
        if (doc.contains("model")) config.model = ModelConfig::from_json(doc.at("model").dump());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad run config: ") + e.what());
    }
    preset_by_name(config.preset); // exactly one preset, and it must exist
    config.model.validate();
}

RunConfig run_config_from_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    RunConfig config;
    merge_config_json(config, text);
    return config;
}

void run_synth(const SynthOptions& options) {
    if (options.n_scenes < 1) throw ValidationError("synth: need at least one scene");
    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    if (ec) throw ValidationError("synth: cannot create output directory " +
                                  options.out_dir.string() + ": " + ec.message());

    Rng master(options.seed);
    json train_list = json::array(), test_list = json::array();
    const int n_test = options.n_scenes / 5;
    const int n_train = options.n_scenes - n_test;
    for (int i = 0; i < options.n_scenes; ++i) {
        CrowdScene scene = synth_scene(master.next_u64(), options.width, options.height,
                                       options.count_range);
        scene.id = scene_basename(i);
        const std::string file = scene.id + ".json";
        save_scene(scene, options.out_dir / file, options.format);
        (i < n_train ? train_list : test_list).push_back(file);
    }
    json manifest;
    manifest["train"] = std::move(train_list);
    manifest["test"] = std::move(test_list);
    std::ofstream out(options.out_dir / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("synth: cannot write manifest");
    out << manifest.dump(2) << "\n";
}

void run_train(const RunConfig& config) {
    const Dataset dataset = load_dataset(config.dataset);
    fs::create_directories(config.out);

    Model model = Model::build(config.model, config.seed);
    const TrainOptions opts = make_train_options(config);
    const TrainResult result = train(model, dataset.train, dataset.test, opts);

    model.params().save(config.out / "checkpoint.pcn");
    {
        std::ofstream out(config.out / "model.json", std::ios::binary);
        out << config.model.to_json() << "\n";
    }
    write_train_log_csv(config.out / "train_log.csv", result.log);
    if (result.aborted_nonfinite)
        throw std::runtime_error("train: non-finite loss; aborted with last good checkpoint at " +
                                 (config.out / "checkpoint.pcn").string());
}

void run_eval(const EvalOptions& options) {
    const Model model = load_model(options.checkpoint, options.model_config);
    const Dataset dataset = load_dataset(options.dataset);
    fs::create_directories(options.out);

    EvalSettings settings;
    settings.radius = options.radius;
    settings.tau = options.tau;
    const EvalReport report = per_scale_report(model, dataset.test, settings);

    write_metrics_csv(options.out / "metrics.csv", report);
    write_pr_csv(options.out / "pr_curve.csv", report.pr_curve);
    write_density_csv(options.out / "density_groups.csv", report.groups);
    write_report_json(options.out / "report.json", report);
    write_pr_svg(options.out / "pr_curve.svg", report.pr_curve);
    write_density_svg(options.out / "density_groups.svg", report.groups);
}

void run_localize(const LocalizeOptions& options) {
    const Model model = load_model(options.checkpoint, options.model_config);
    const Dataset dataset = load_dataset(options.dataset);
    fs::create_directories(options.out);

    std::vector<const CrowdScene*> scenes;
    if (options.split == "train" || options.split == "all")
        for (const CrowdScene& s : dataset.train) scenes.push_back(&s);
    if (options.split == "test" || options.split == "all")
        for (const CrowdScene& s : dataset.test) scenes.push_back(&s);
    if (options.split != "train" && options.split != "test" && options.split != "all")
        throw ValidationError("localize: split must be train, test or all");

    std::vector<std::string> ids;
    std::vector<std::vector<Detection>> dets;
    for (const CrowdScene* s : scenes) {
        const ModelOutput out = model.infer(s->image);
        ids.push_back(s->id);
        dets.push_back(extract_detections(out.head_maps[2], options.tau, s->width, s->height));
    }
    write_detections_csv(options.out / "detections.csv", ids, dets);
}

void run_ablate(const RunConfig& config) {
    const Dataset dataset = load_dataset(config.dataset);
    fs::create_directories(config.out);

    struct Cell {
        const char* name;
        int dropped; // index into weights, -1 for none
    };
    // Row order mirrors the ablation table: one loss dropped per row, then
    // the full configuration.
    const Cell cells[4] = {{"drop_l1", 0}, {"drop_l2", 1}, {"drop_l3", 2}, {"all_on", -1}};

    std::vector<AblationRow> rows;
    for (const Cell& cell : cells) {
        std::array<double, 4> weights = config.loss_weights;
        if (cell.dropped >= 0) weights[cell.dropped] = 0.0;

        const TrainedRun run = train_once(config, dataset, weights);
        EvalSettings settings;
        settings.radius = config.radius;
        settings.tau = config.tau;
        const EvalReport report = per_scale_report(run.model, dataset.test, settings);

        AblationRow row;
        row.config = cell.name;
        row.weights = weights;
        row.mae = report.mae;
        row.mse = report.mse;
        row.ap = report.ap;
        rows.push_back(row);
    }
    write_ablation_csv(config.out / "ablation.csv", rows);
}

} // namespace crowdcount
