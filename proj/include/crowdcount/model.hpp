#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crowdcount/nn.hpp"
#include "crowdcount/scalemap.hpp"
#include "crowdcount/scene.hpp"

namespace crowdcount {

// Three-branch multiscale network. Each branch encodes the image to one of
// the scales 1/8, 1/4, 1/2 with stride-2 3x3 convs, widens its receptive
// field with dilated 3x3 convs, and emits a single-channel head map through a
// 1x1 estimator. The fusion module downsamples the three branch embeddings to
// 1/16 with 1, 2 and 3 stride-2 kernel-2 convs, concatenates them and applies
// a final 1x1 conv to produce the density map whose sum is the count.
struct ModelConfig {
    int image_channels = 1;
    // Channels after each stride-2 encoder conv; branches S1/S2/S3 take
    // 3/2/1 downsampling convs respectively.
    std::array<std::vector<int>, 3> encoder_channels{{{8, 8, 8}, {8, 8}, {8}}};
    std::array<int, 3> dilation_layers{3, 2, 1};
    std::array<int, 3> dilation_rates{2, 2, 2};
    std::array<int, 3> fusion_layers{1, 2, 3}; // fixed by the architecture
    std::array<double, 4> loss_weights{0.1, 0.2, 0.3, 0.1};

    void validate() const; // throws ValidationError

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

struct ModelOutput {
    std::array<Tensor, 3> head_maps; // estimates at S1, S2, S3
    Tensor density_map;              // estimate at S4
    double count = 0.0;              // sum of density_map
};

class Model {
public:
    static Model build(const ModelConfig& config, std::uint64_t seed);

    // Forward pass whose tape is kept for a subsequent backward().
    struct Pass {
        Tape tape;
        std::array<Tape::NodeId, 3> head_ids{};
        Tape::NodeId density_id = -1;
        ModelOutput output() const;
    };

    Pass forward(const Tensor& image) const;
    // Forward without retaining the tape; safe to call concurrently on a
    // frozen model.
    ModelOutput infer(const Tensor& image) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }

    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

private:
    Model() = default;

    ModelConfig cfg_;
    ParamStore store_;
    struct Branch {
        std::vector<ConvLayer> encoder;
        std::vector<ConvLayer> dilation;
        ConvLayer head;
        std::vector<ConvLayer> fusion_down;
    };
    std::array<Branch, 3> branches_;
    ConvLayer fusion_out_;
};

// terms[j] holds the raw squared L2 distance at scale j+1; total is the
// weighted sum. A weight of exactly 0 removes that term from the backward
// pass entirely (the ablation mechanism).
struct LossBreakdown {
    double total = 0.0;
    std::array<double, 4> terms{};
};

LossBreakdown total_loss(const ModelOutput& output, const std::array<ScaleMap, 4>& targets,
                         const std::array<double, 4>& weights);

// Computes the loss and backpropagates it into the model parameters.
LossBreakdown loss_backward(Model::Pass& pass, const std::array<ScaleMap, 4>& targets,
                            const std::array<double, 4>& weights);

// ---------------------------------------------------------------------------
// Training

struct OptimizerPreset {
    std::string name;
    AdamConfig adam;
    int epochs = 0;
    int patience = 0;
};

OptimizerPreset paper_preset(); // beta1 0.934, lr 1e-6, 200 epochs
OptimizerPreset toy_preset();   // lr 1e-3; converges at desk scale
OptimizerPreset preset_by_name(const std::string& name);

struct TrainOptions {
    AdamConfig adam;
    int epochs = 60;
    int patience = 10;
    std::array<double, 4> loss_weights{0.1, 0.2, 0.3, 0.1};
    std::uint64_t shuffle_seed = 0;
};

struct EpochRecord {
    int epoch = 0;          // 1-based
    double loss_total = 0;  // mean weighted loss per scene
    std::array<double, 4> terms{}; // mean raw per-scale losses
    double val_mae = 0;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    int best_epoch = -1;
    double best_val_mae = 0;
    bool early_stopped = false;
    bool aborted_nonfinite = false;
};

// Trains in-place; on return the model holds the best-validation-MAE
// parameters. Validation MAE is the mean absolute fused-count error over
// `val_scenes`. Stops early after `patience` epochs without improvement.
TrainResult train(Model& model, const std::vector<CrowdScene>& train_scenes,
                  const std::vector<CrowdScene>& val_scenes, const TrainOptions& options);

} // namespace crowdcount
