#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "crowdcount/rng.hpp"
#include "crowdcount/tensor.hpp"

namespace crowdcount {

// ---------------------------------------------------------------------------
// Parameters

struct Parameter {
    std::string name;
    std::vector<int> shape;        // e.g. {out, in, k, k} for conv weights
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> m, v;      // Adam moments
    std::size_t size() const { return value.size(); }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class ParamStore {
public:
    Parameter& create(const std::string& name, std::vector<int> shape);
    Parameter* find(const std::string& name);

    void zero_grad();

    // Standard bias-corrected Adam. Throws std::runtime_error if any gradient
    // is non-finite (training aborts with diagnostics).
    void adam_step(const AdamConfig& cfg);
    int step_count() const { return step_; }

    std::size_t total_size() const;
    std::vector<double> snapshot() const;
    void restore(const std::vector<double>& flat);

    // Flat binary checkpoint: magic "PCN1", u32 param count, then per
    // parameter u32 name length, name bytes, u32 ndim, u32 dims, and the
    // values as little-endian 64-bit floats.
    void save(const std::filesystem::path& path) const;
    // Loads into an existing store; names and shapes must match exactly.
    void load(const std::filesystem::path& path);

    const std::vector<std::unique_ptr<Parameter>>& parameters() const { return params_; }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    int step_ = 0;
};

// ---------------------------------------------------------------------------
// Layers

struct ConvSpec {
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 3;   // 1, 2 or 3
    int stride = 1;   // 1 or 2
    int dilation = 1;
    int padding = 0;

    int out_h(int in_h) const {
        return (in_h + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
    }
    int out_w(int in_w) const {
        return (in_w + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
    }
};

struct ConvLayer {
    ConvSpec spec;
    Parameter* weight = nullptr; // shape {out, in, k, k}
    Parameter* bias = nullptr;   // shape {out}
};

ConvLayer make_conv(ParamStore& store, const std::string& name, const ConvSpec& spec);

// He fan-in initialization for the weights, zero bias.
void he_init(ConvLayer& layer, Rng& rng);

// ---------------------------------------------------------------------------
// Ops (forward)

// Cross-correlation with stride/dilation/zero padding.
Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer);

Tensor relu(const Tensor& input);

Tensor concat_channels(const std::vector<Tensor>& inputs);

// Squared L2 distance (sum over all cells, not mean-reduced) and its gradient
// 2 * (pred - target).
std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target);

// ---------------------------------------------------------------------------
// Tape
//
// Define-by-run graph over the ops above. A forward pass records nodes; a
// single backward() call propagates seed gradients in reverse creation order
// and accumulates into parameter .grad buffers, handling fan-out by summing.

class Tape {
public:
    using NodeId = int;

    NodeId input(Tensor value);
    NodeId conv2d(NodeId x, const ConvLayer& layer);
    NodeId relu(NodeId x);
    NodeId concat(const std::vector<NodeId>& xs);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }

    // seeds: (node, dL/dnode). Node gradients are reset, parameter gradients
    // accumulate (call ParamStore::zero_grad at step start).
    void backward(const std::vector<std::pair<NodeId, Tensor>>& seeds);

private:
    enum class Op { Input, Conv2d, Relu, Concat };
    struct Node {
        Op op;
        Tensor value;
        Tensor grad;
        std::vector<NodeId> inputs;
        const ConvLayer* layer = nullptr;
    };
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    int checked = 0;
    bool ok(double tol) const { return checked > 0 && max_rel_err < tol; }
};

// Central finite differences over every parameter scalar. `loss_fn` must run
// a full forward pass and return the loss; it must not touch gradients. The
// analytic gradients are read from the store and must be populated before the
// call. Near-zero pairs (both |a| and |n| below `zero_floor`) are compared
// absolutely.
GradCheckResult finite_difference_check(ParamStore& store,
                                        const std::function<double()>& loss_fn,
                                        double h = 1e-5, double zero_floor = 1e-8);

} // namespace crowdcount
