#include "crowdcount/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace crowdcount {

// ---------------------------------------------------------------------------
// ParamStore

Parameter& ParamStore::create(const std::string& name, std::vector<int> shape) {
    if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("non-positive dimension in parameter " + name);
        n *= static_cast<std::size_t>(d);
    }
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->shape = std::move(shape);
    p->value.assign(n, 0.0);
    p->grad.assign(n, 0.0);
    p->m.assign(n, 0.0);
    p->v.assign(n, 0.0);
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

void ParamStore::adam_step(const AdamConfig& cfg) {
    for (const auto& p : params_)
        for (double g : p->grad)
            if (!std::isfinite(g))
                throw std::runtime_error("adam_step: non-finite gradient in parameter '" +
                                         p->name + "'");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step_);
    for (auto& p : params_) {
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double g = p->grad[i];
            p->m[i] = cfg.beta1 * p->m[i] + (1.0 - cfg.beta1) * g;
            p->v[i] = cfg.beta2 * p->v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = p->m[i] / bc1;
            const double vhat = p->v[i] / bc2;
            p->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
}

std::vector<double> ParamStore::snapshot() const {
    std::vector<double> flat;
    flat.reserve(total_size());
    for (const auto& p : params_) flat.insert(flat.end(), p->value.begin(), p->value.end());
    return flat;
}

void ParamStore::restore(const std::vector<double>& flat) {
    if (flat.size() != total_size())
        throw std::invalid_argument("restore: snapshot size mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
        std::copy(flat.begin() + off, flat.begin() + off + p->size(), p->value.begin());
        off += p->size();
    }
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double d) {
    const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

constexpr char kMagic[4] = {'P', 'C', 'N', '1'};

} // namespace

void ParamStore::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(params_.size()));
    for (const auto& p : params_) {
        put_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u32(out, static_cast<std::uint32_t>(p->shape.size()));
        for (int d : p->shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : p->value) put_f64(out, v);
    }
    if (!out) throw std::runtime_error("write failure on checkpoint: " + path.string());
}

void ParamStore::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path.string());
    const std::uint32_t count = get_u32(in);
    if (count != params_.size())
        throw std::runtime_error("checkpoint parameter count mismatch in " + path.string());
    for (auto& p : params_) {
        const std::uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (name != p->name)
            throw std::runtime_error("checkpoint parameter order mismatch: expected '" + p->name +
                                     "', found '" + name + "'");
        const std::uint32_t ndim = get_u32(in);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(get_u32(in));
        if (shape != p->shape)
            throw std::runtime_error("checkpoint shape mismatch for parameter '" + p->name + "'");
        for (double& v : p->value) v = get_f64(in);
        if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
        if (!std::all_of(p->value.begin(), p->value.end(),
                         [](double v) { return std::isfinite(v); }))
            throw std::runtime_error("non-finite value in checkpoint parameter '" + p->name + "'");
    }
}

// ---------------------------------------------------------------------------
// Layers

ConvLayer make_conv(ParamStore& store, const std::string& name, const ConvSpec& spec) {
    if (spec.kernel < 1 || spec.kernel > 3)
        throw std::invalid_argument("conv kernel must be 1, 2 or 3: " + name);
    if (spec.stride != 1 && spec.stride != 2)
        throw std::invalid_argument("conv stride must be 1 or 2: " + name);
    if (spec.dilation < 1 || spec.padding < 0 || spec.in_channels < 1 || spec.out_channels < 1)
        throw std::invalid_argument("bad conv spec: " + name);
    ConvLayer layer;
    layer.spec = spec;
    layer.weight = &store.create(name + ".w",
                                 {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
    layer.bias = &store.create(name + ".b", {spec.out_channels});
    return layer;
}

void he_init(ConvLayer& layer, Rng& rng) {
    const double fan_in =
        static_cast<double>(layer.spec.in_channels) * layer.spec.kernel * layer.spec.kernel;
    const double stddev = std::sqrt(2.0 / fan_in);
    for (double& w : layer.weight->value) w = stddev * rng.normal();
    // Small positive bias keeps dead channels off the ReLU kink, where the
    // analytic subgradient and a two-sided finite difference disagree.
    std::fill(layer.bias->value.begin(), layer.bias->value.end(), 0.01);
}

// ---------------------------------------------------------------------------
// Ops

Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer) {
    const ConvSpec& s = layer.spec;
    if (input.channels != s.in_channels)
        throw std::invalid_argument("conv2d: input has " + std::to_string(input.channels) +
                                    " channels, layer expects " + std::to_string(s.in_channels));
    const int oh = s.out_h(input.height);
    const int ow = s.out_w(input.width);
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: non-positive output dims");

    Tensor out(s.out_channels, oh, ow);
    const std::vector<double>& w = layer.weight->value;
    for (int o = 0; o < s.out_channels; ++o) {
        const double b = layer.bias->value[o];
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = b;
                for (int i = 0; i < s.in_channels; ++i) {
                    for (int ky = 0; ky < s.kernel; ++ky) {
                        const int iy = oy * s.stride - s.padding + ky * s.dilation;
                        if (iy < 0 || iy >= input.height) continue;
                        for (int kx = 0; kx < s.kernel; ++kx) {
                            const int ix = ox * s.stride - s.padding + kx * s.dilation;
                            if (ix < 0 || ix >= input.width) continue;
                            acc += w[((static_cast<std::size_t>(o) * s.in_channels + i) * s.kernel +
                                      ky) * s.kernel + kx] * input.at(i, iy, ix);
                        }
                    }
                }
                out.at(o, oy, ox) = acc;
            }
        }
    }
    return out;
}

namespace {

void conv2d_backward(const Tensor& input, const ConvLayer& layer, const Tensor& grad_out,
                     Tensor& grad_in) {
    const ConvSpec& s = layer.spec;
    const std::vector<double>& w = layer.weight->value;
    std::vector<double>& gw = layer.weight->grad;
    std::vector<double>& gb = layer.bias->grad;
    for (int o = 0; o < s.out_channels; ++o) {
        for (int oy = 0; oy < grad_out.height; ++oy) {
            for (int ox = 0; ox < grad_out.width; ++ox) {
                const double g = grad_out.at(o, oy, ox);
                if (g == 0.0) continue;
                gb[o] += g;
                for (int i = 0; i < s.in_channels; ++i) {
                    for (int ky = 0; ky < s.kernel; ++ky) {
                        const int iy = oy * s.stride - s.padding + ky * s.dilation;
                        if (iy < 0 || iy >= input.height) continue;
                        for (int kx = 0; kx < s.kernel; ++kx) {
                            const int ix = ox * s.stride - s.padding + kx * s.dilation;
                            if (ix < 0 || ix >= input.width) continue;
                            const std::size_t wi =
                                ((static_cast<std::size_t>(o) * s.in_channels + i) * s.kernel + ky) *
                                    s.kernel + kx;
                            gw[wi] += g * input.at(i, iy, ix);
                            grad_in.at(i, iy, ix) += g * w[wi];
                        }
                    }
                }
            }
        }
    }
}

} // namespace

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    int channels = 0;
    for (const Tensor& t : inputs) {
        if (t.height != inputs[0].height || t.width != inputs[0].width)
            throw std::invalid_argument("concat_channels: spatial dims mismatch");
        channels += t.channels;
    }
    Tensor out(channels, inputs[0].height, inputs[0].width);
    std::size_t off = 0;
    for (const Tensor& t : inputs) {
        std::copy(t.data.begin(), t.data.end(), out.data.begin() + off);
        off += t.size();
    }
    return out;
}

std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    Tensor grad(pred.channels, pred.height, pred.width);
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        loss += d * d;
        grad.data[i] = 2.0 * d;
    }
    return {loss, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Tape

Tape::NodeId Tape::input(Tensor value) {
    nodes_.push_back({Op::Input, std::move(value), {}, {}, nullptr});
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::conv2d(NodeId x, const ConvLayer& layer) {
    Tensor out = conv2d_forward(nodes_[x].value, layer);
    nodes_.push_back({Op::Conv2d, std::move(out), {}, {x}, &layer});
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::relu(NodeId x) {
    Tensor out = crowdcount::relu(nodes_[x].value);
    nodes_.push_back({Op::Relu, std::move(out), {}, {x}, nullptr});
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::concat(const std::vector<NodeId>& xs) {
    std::vector<Tensor> vals;
    vals.reserve(xs.size());
    for (NodeId x : xs) vals.push_back(nodes_[x].value);
    Tensor out = concat_channels(vals);
    nodes_.push_back({Op::Concat, std::move(out), {}, xs, nullptr});
    return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::backward(const std::vector<std::pair<NodeId, Tensor>>& seeds) {
    if (nodes_.empty()) throw std::logic_error("backward without forward");
    for (Node& n : nodes_)
        n.grad = Tensor(n.value.channels, n.value.height, n.value.width);
    for (const auto& [id, seed] : seeds) {
        if (!seed.same_shape(nodes_[id].value))
            throw std::invalid_argument("backward: seed shape mismatch");
        for (std::size_t i = 0; i < seed.data.size(); ++i) nodes_[id].grad.data[i] += seed.data[i];
    }
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = nodes_[id];
        switch (n.op) {
            case Op::Input:
                break;
            case Op::Conv2d:
                conv2d_backward(nodes_[n.inputs[0]].value, *n.layer, n.grad,
                                nodes_[n.inputs[0]].grad);
                break;
            case Op::Relu: {
                Node& in = nodes_[n.inputs[0]];
                for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                    if (in.value.data[i] > 0.0) in.grad.data[i] += n.grad.data[i];
                break;
            }
            case Op::Concat: {
                std::size_t off = 0;
                for (NodeId xi : n.inputs) {
                    Node& in = nodes_[xi];
                    for (std::size_t i = 0; i < in.grad.data.size(); ++i)
                        in.grad.data[i] += n.grad.data[off + i];
                    off += in.grad.data.size();
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckResult finite_difference_check(ParamStore& store,
                                        const std::function<double()>& loss_fn, double h,
                                        double zero_floor) {
    GradCheckResult result;
    for (const auto& p : store.parameters()) {
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + h;
            const double lp = loss_fn();
            p->value[i] = saved - h;
            const double lm = loss_fn();
            p->value[i] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = p->grad[i];
            const double denom = std::max(std::abs(numeric), std::abs(analytic));
            double rel;
            if (denom < zero_floor) {
                rel = std::abs(numeric - analytic) < zero_floor ? 0.0 : 1.0;
            } else {
                rel = std::abs(numeric - analytic) / denom;
            }
            ++result.checked;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_param = p->name;
                result.worst_index = static_cast<int>(i);
            }
        }
    }
    return result;
}

} // namespace crowdcount
