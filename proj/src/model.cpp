#include "crowdcount/model.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "crowdcount/error.hpp"

using nlohmann::json;

namespace crowdcount {

void ModelConfig::validate() const {
    if (image_channels < 1) throw ValidationError("model: image_channels must be >= 1");
    if (fusion_layers != std::array<int, 3>{1, 2, 3})
        throw ValidationError("model: fusion layer counts are fixed at (1, 2, 3)");
    for (int b = 0; b < 3; ++b) {
        const std::size_t need = static_cast<std::size_t>(3 - b); // S1 needs 3 halvings, S3 one
        if (encoder_channels[b].size() != need)
            throw ValidationError("model: branch s" + std::to_string(b + 1) + " needs exactly " +
                                  std::to_string(need) + " encoder channel entries");
        for (int c : encoder_channels[b])
            if (c < 1) throw ValidationError("model: encoder channels must be positive");
        if (dilation_layers[b] < 0) throw ValidationError("model: negative dilation layer count");
        if (dilation_rates[b] < 1) throw ValidationError("model: dilation rate must be >= 1");
    }
    for (double w : loss_weights)
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ValidationError("model: loss weights must be finite and non-negative");
}

std::string ModelConfig::to_json() const {
    json doc;
    doc["image_channels"] = image_channels;
    doc["encoder_channels"] = encoder_channels;
    doc["dilation_layers"] = dilation_layers;
    doc["dilation_rates"] = dilation_rates;
    doc["fusion_layers"] = fusion_layers;
    doc["loss_weights"] = loss_weights;
    return doc.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    ModelConfig cfg;
    try {
        json doc = json::parse(text);
        if (doc.contains("image_channels")) doc.at("image_channels").get_to(cfg.image_channels);
        if (doc.contains("encoder_channels")) doc.at("encoder_channels").get_to(cfg.encoder_channels);
        if (doc.contains("dilation_layers")) doc.at("dilation_layers").get_to(cfg.dilation_layers);
        if (doc.contains("dilation_rates")) doc.at("dilation_rates").get_to(cfg.dilation_rates);
        if (doc.contains("fusion_layers")) doc.at("fusion_layers").get_to(cfg.fusion_layers);
        if (doc.contains("loss_weights")) doc.at("loss_weights").get_to(cfg.loss_weights);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model model;
    model.cfg_ = config;
    Rng rng(seed);

    std::vector<ConvLayer*> init_order;
    for (int b = 0; b < 3; ++b) {
        Branch& branch = model.branches_[b];
        const std::string prefix = "s" + std::to_string(b + 1);
        int ch = config.image_channels;
        for (std::size_t k = 0; k < config.encoder_channels[b].size(); ++k) {
            ConvSpec spec;
            spec.in_channels = ch;
            spec.out_channels = config.encoder_channels[b][k];
            spec.kernel = 3;
            spec.stride = 2;
            spec.padding = 1;
            branch.encoder.push_back(
                make_conv(model.store_, prefix + ".enc" + std::to_string(k), spec));
            ch = spec.out_channels;
        }
        for (int k = 0; k < config.dilation_layers[b]; ++k) {
            ConvSpec spec;
            spec.in_channels = ch;
            spec.out_channels = ch;
            spec.kernel = 3;
            spec.stride = 1;
            spec.dilation = config.dilation_rates[b];
            spec.padding = config.dilation_rates[b]; // keeps spatial dims for k=3
            branch.dilation.push_back(
                make_conv(model.store_, prefix + ".dil" + std::to_string(k), spec));
        }
        {
            ConvSpec spec;
            spec.in_channels = ch;
            spec.out_channels = 1;
            spec.kernel = 1;
            branch.head = make_conv(model.store_, prefix + ".head", spec);
        }
        for (int k = 0; k < config.fusion_layers[b]; ++k) {
            ConvSpec spec;
            spec.in_channels = ch;
            spec.out_channels = ch;
            spec.kernel = 2;
            spec.stride = 2;
            branch.fusion_down.push_back(
                make_conv(model.store_, prefix + ".fuse" + std::to_string(k), spec));
        }
        for (auto& l : branch.encoder) init_order.push_back(&l);
        for (auto& l : branch.dilation) init_order.push_back(&l);
        init_order.push_back(&branch.head);
        for (auto& l : branch.fusion_down) init_order.push_back(&l);
    }
    {
        ConvSpec spec;
        spec.in_channels = 0;
        for (int b = 0; b < 3; ++b) spec.in_channels += model.branches_[b].encoder.back().spec.out_channels;
        spec.out_channels = 1;
        spec.kernel = 1;
        model.fusion_out_ = make_conv(model.store_, "fusion.out", spec);
        init_order.push_back(&model.fusion_out_);
    }
    for (ConvLayer* layer : init_order) he_init(*layer, rng);
    return model;
}

Model::Pass Model::forward(const Tensor& image) const {
    if (image.channels != cfg_.image_channels)
        throw ValidationError("forward: image has " + std::to_string(image.channels) +
                              " channels, model expects " + std::to_string(cfg_.image_channels));
    if (image.height < 16 || image.width < 16 || image.height % 16 != 0 || image.width % 16 != 0)
        throw ValidationError("forward: image dims must be >= 16 and divisible by 16");

    Pass pass;
    Tape& tape = pass.tape;
    const Tape::NodeId img = tape.input(image);
    std::vector<Tape::NodeId> fusion_inputs;
    for (int b = 0; b < 3; ++b) {
        const Branch& branch = branches_[b];
        Tape::NodeId x = img;
        for (const ConvLayer& l : branch.encoder) x = tape.relu(tape.conv2d(x, l));
        for (const ConvLayer& l : branch.dilation) x = tape.relu(tape.conv2d(x, l));
        pass.head_ids[b] = tape.relu(tape.conv2d(x, branch.head));
        Tape::NodeId f = x;
        for (const ConvLayer& l : branch.fusion_down) f = tape.relu(tape.conv2d(f, l));
        fusion_inputs.push_back(f);
    }
    pass.density_id = tape.relu(tape.conv2d(tape.concat(fusion_inputs), fusion_out_));
    return pass;
}

ModelOutput Model::Pass::output() const {
    ModelOutput out;
    for (int b = 0; b < 3; ++b) out.head_maps[b] = tape.value(head_ids[b]);
    out.density_map = tape.value(density_id);
    out.count = out.density_map.sum();
    return out;
}

ModelOutput Model::infer(const Tensor& image) const { return forward(image).output(); }

LossBreakdown total_loss(const ModelOutput& output, const std::array<ScaleMap, 4>& targets,
                         const std::array<double, 4>& weights) {
    LossBreakdown lb;
    for (int j = 0; j < 4; ++j) {
        const Tensor& pred = j < 3 ? output.head_maps[j] : output.density_map;
        lb.terms[j] = mse_loss(pred, to_tensor(targets[j])).first;
        lb.total += weights[j] * lb.terms[j];
    }
    return lb;
}

LossBreakdown loss_backward(Model::Pass& pass, const std::array<ScaleMap, 4>& targets,
                            const std::array<double, 4>& weights) {
    LossBreakdown lb;
    std::vector<std::pair<Tape::NodeId, Tensor>> seeds;
    for (int j = 0; j < 4; ++j) {
        const Tape::NodeId id = j < 3 ? pass.head_ids[j] : pass.density_id;
        auto [loss, grad] = mse_loss(pass.tape.value(id), to_tensor(targets[j]));
        lb.terms[j] = loss;
        lb.total += weights[j] * loss;
        if (weights[j] == 0.0) continue; // ablated: excluded from backward
        for (double& g : grad.data) g *= weights[j];
        seeds.emplace_back(id, std::move(grad));
    }
    pass.tape.backward(seeds);
    return lb;
}

// ---------------------------------------------------------------------------
// Training

OptimizerPreset paper_preset() {
    OptimizerPreset p;
    p.name = "paper";
    p.adam = {1e-6, 0.934, 0.999, 1e-8};
    p.epochs = 200;
    p.patience = 10;
    return p;
}

OptimizerPreset toy_preset() {
    OptimizerPreset p;
    p.name = "toy";
    p.adam = {1e-3, 0.9, 0.999, 1e-8};
    p.epochs = 60;
    p.patience = 10;
    return p;
}

OptimizerPreset preset_by_name(const std::string& name) {
    if (name == "paper") return paper_preset();
    if (name == "toy") return toy_preset();
    throw ValidationError("unknown optimizer preset '" + name + "' (want 'paper' or 'toy')");
}

TrainResult train(Model& model, const std::vector<CrowdScene>& train_scenes,
                  const std::vector<CrowdScene>& val_scenes, const TrainOptions& options) {
    if (train_scenes.empty()) throw ValidationError("train: empty train split");
    if (val_scenes.empty()) throw ValidationError("train: empty validation split");

    std::vector<std::array<ScaleMap, 4>> targets;
    targets.reserve(train_scenes.size());
    for (const CrowdScene& s : train_scenes) targets.push_back(bin_all(s));

    TrainResult result;
    result.best_val_mae = std::numeric_limits<double>::infinity();
    std::vector<double> best_params = model.params().snapshot();
    Rng shuffle_rng(options.shuffle_seed);
    std::vector<std::size_t> order(train_scenes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t idx : order) {
            model.params().zero_grad();
            Model::Pass pass = model.forward(train_scenes[idx].image);
            const LossBreakdown lb = loss_backward(pass, targets[idx], options.loss_weights);
            if (!std::isfinite(lb.total)) {
                model.params().restore(best_params);
                result.aborted_nonfinite = true;
                return result;
            }
            model.params().adam_step(options.adam);
            rec.loss_total += lb.total;
            for (int j = 0; j < 4; ++j) rec.terms[j] += lb.terms[j];
        }
        const double n = static_cast<double>(train_scenes.size());
        rec.loss_total /= n;
        for (double& t : rec.terms) t /= n;

        double val_err = 0.0;
        for (const CrowdScene& s : val_scenes)
            val_err += std::abs(model.infer(s.image).count - s.count());
        rec.val_mae = val_err / static_cast<double>(val_scenes.size());
        result.log.push_back(rec);

        if (rec.val_mae < result.best_val_mae) {
            result.best_val_mae = rec.val_mae;
            result.best_epoch = epoch;
            best_params = model.params().snapshot();
        } else if (epoch - result.best_epoch >= options.patience) {
            result.early_stopped = true;
            break;
        }
    }
    model.params().restore(best_params);
    return result;
}

} // namespace crowdcount
