#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "crowdcount/model.hpp"
#include "crowdcount/scene.hpp"

namespace crowdcount {

// Command implementations behind the CLI; callable directly from tests.
// All functions throw ValidationError for bad input and std::runtime_error
// for runtime failures; the CLI maps these to exit codes 1 and 2.

struct SynthOptions {
    int n_scenes = 10;
    int width = 64;
    int height = 64;
    CountRange count_range{1, 30};
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
    ImageFormat format = ImageFormat::Pnm;
};

// Writes scene_XXXX.json (+ .pgm) files and manifest.json with an 80/20
// train/test split (test gets floor(n/5) scenes).
void run_synth(const SynthOptions& options);

struct RunConfig {
    std::filesystem::path dataset;
    std::filesystem::path out;
    std::string preset = "toy";
    std::uint64_t seed = 0;
    ModelConfig model;
    std::array<double, 4> loss_weights{0.1, 0.2, 0.3, 0.1};
    std::array<bool, 3> ablation_mask{true, true, true}; // L1..L3; L4 cannot be disabled
    double tau = 0.5;
    double radius = 5.0;
    std::optional<int> epochs;
    std::optional<int> patience;

    // loss_weights with masked-out entries forced to zero
    std::array<double, 4> effective_weights() const;
};

RunConfig run_config_from_json_file(const std::filesystem::path& path);
void merge_config_json(RunConfig& config, const std::string& json_text);

// Trains on the dataset's train split (validating on test) and writes
// checkpoint.pcn, model.json and train_log.csv under config.out.
void run_train(const RunConfig& config);

struct EvalOptions {
    std::filesystem::path checkpoint;
    std::optional<std::filesystem::path> model_config; // default: model.json next to checkpoint
    std::filesystem::path dataset;
    std::filesystem::path out;
    double radius = 5.0;
    double tau = 0.5;
};

// Evaluates the checkpoint on the test split; writes metrics.csv,
// pr_curve.csv, density_groups.csv, report.json, pr_curve.svg,
// density_groups.svg.
void run_eval(const EvalOptions& options);

struct LocalizeOptions {
    std::filesystem::path checkpoint;
    std::optional<std::filesystem::path> model_config;
    std::filesystem::path dataset;
    std::filesystem::path out;
    double tau = 0.5;
    std::string split = "test"; // train | test | all
};

// Writes detections.csv for the chosen split.
void run_localize(const LocalizeOptions& options);

// Four training+eval runs (drop L1 / drop L2 / drop L3 / all on) at identical
// seeds; writes ablation.csv.
void run_ablate(const RunConfig& config);

} // namespace crowdcount
