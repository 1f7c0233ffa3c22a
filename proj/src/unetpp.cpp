#include "nusr/unetpp.hpp"

#include <cmath>

#include "nusr/ops.hpp"
#include "nusr/rng.hpp"

namespace nusr {

void UNetPPConfig::validate() const {
    if (levels < 2) throw UsageError("model needs at least 2 levels");
    if (static_cast<int>(channels.size()) != levels) {
        throw UsageError("channels list length must equal levels");
    }
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i] < 1) throw UsageError("channel widths must be positive");
        if (i > 0 && channels[i] <= channels[i - 1]) {
            throw UsageError("channel widths must be strictly increasing");
        }
    }
    if (in_channels < 1 || out_channels < 1) throw UsageError("channel counts must be positive");
}

std::vector<NodeId> UNetPPConfig::node_ids() const {
    std::vector<NodeId> ids;
    for (int i = 0; i < levels; ++i) {
        for (int j = 0; j + i <= levels - 1; ++j) {
            if (!nested && j != 0 && j != levels - 1 - i) continue;
            ids.push_back({i, j});
        }
    }
    return ids;  // sorted by (i, j)
}

std::int64_t UNetPPConfig::block_in_channels(NodeId id) const {
    if (id.j == 0) return id.i == 0 ? in_channels : channels[static_cast<std::size_t>(id.i - 1)];
    const std::int64_t c_i = channels[static_cast<std::size_t>(id.i)];
    const std::int64_t skips = nested ? id.j : 1;
    return skips * c_i + c_i;  // skip connections plus the upsampled input
}

std::int64_t UNetPPConfig::downsample_divisor() const {
    return std::int64_t(1) << (levels - 1);
}

Tensor vgg_block(const Tensor& x, const VggBlockParams& params) {
    Tensor h = relu(conv2d(x, params.conv1.weight, params.conv1.bias, 1, 1));
    return relu(conv2d(h, params.conv2.weight, params.conv2.bias, 1, 1));
}

namespace {

// Every conv (blocks, upsamplers, head) draws weights uniformly from
// +/- sqrt(1/fan_in) with zero bias, all from the single run-seeded stream.
Conv2dParams init_conv(std::int64_t c_out, std::int64_t c_in, std::int64_t k,
                       std::mt19937_64& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(c_in * k * k));
    return Conv2dParams{
        Tensor::uniform({c_out, c_in, k, k}, static_cast<scalar>(-bound),
                        static_cast<scalar>(bound), rng, /*requires_grad=*/true),
        Tensor::zeros({c_out}, /*requires_grad=*/true)};
}

Conv2dParams init_upsampler(std::int64_t c_in, std::int64_t c_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(c_in * 4));
    return Conv2dParams{
        Tensor::uniform({c_in, c_out, 2, 2}, static_cast<scalar>(-bound),
                        static_cast<scalar>(bound), rng, /*requires_grad=*/true),
        Tensor::zeros({c_out}, /*requires_grad=*/true)};
}

std::string node_name(NodeId id) {
    return "node_" + std::to_string(id.i) + "_" + std::to_string(id.j);
}

}  // namespace

UNetPPModel UNetPPModel::create(const UNetPPConfig& config, std::uint64_t seed) {
    config.validate();
    UNetPPModel model;
    model.config = config;
    std::mt19937_64 rng(splitmix64(seed));
    for (NodeId id : config.node_ids()) {
        const std::int64_t c_i = config.channels[static_cast<std::size_t>(id.i)];
        const std::int64_t c_in = config.block_in_channels(id);
        VggBlockParams block;
        block.conv1 = init_conv(c_i, c_in, 3, rng);
        block.conv2 = init_conv(c_i, c_i, 3, rng);
        model.blocks.emplace(id, std::move(block));
        if (id.j >= 1) {
            const std::int64_t c_below = config.channels[static_cast<std::size_t>(id.i + 1)];
            model.upsamplers.emplace(id, init_upsampler(c_below, c_i, rng));
        }
    }
    model.head = init_conv(config.out_channels, config.channels[0], 1, rng);
    return model;
}

std::vector<std::pair<std::string, Tensor>> UNetPPModel::parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& [id, block] : blocks) {
        const std::string base = node_name(id);
        out.emplace_back(base + ".conv1.weight", block.conv1.weight);
        out.emplace_back(base + ".conv1.bias", block.conv1.bias);
        out.emplace_back(base + ".conv2.weight", block.conv2.weight);
        out.emplace_back(base + ".conv2.bias", block.conv2.bias);
    }
    for (const auto& [id, up] : upsamplers) {
        const std::string base = "up_" + std::to_string(id.i) + "_" + std::to_string(id.j);
        out.emplace_back(base + ".weight", up.weight);
        out.emplace_back(base + ".bias", up.bias);
    }
    out.emplace_back("head.weight", head.weight);
    out.emplace_back("head.bias", head.bias);
    return out;
}

std::int64_t UNetPPModel::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : parameters()) n += t.numel();
    return n;
}

void UNetPPModel::zero_grad() {
    for (auto& [name, t] : parameters()) const_cast<Tensor&>(t).zero_grad();
}

Tensor node_forward(NodeId id, const std::map<NodeId, Tensor>& cached, const UNetPPModel& model,
                    const Tensor& input) {
    auto block_it = model.blocks.find(id);
    if (block_it == model.blocks.end()) {
        throw Error("node (" + std::to_string(id.i) + "," + std::to_string(id.j) +
                    ") does not exist in this model");
    }
    auto need = [&](NodeId dep) -> const Tensor& {
        auto it = cached.find(dep);
        if (it == cached.end()) {
            throw Error("internal ordering error: node (" + std::to_string(dep.i) + "," +
                        std::to_string(dep.j) + ") not computed yet");
        }
        return it->second;
    };

    if (id.j == 0) {
        if (id.i == 0) return vgg_block(input, block_it->second);
        return vgg_block(maxpool2d(need({id.i - 1, 0})), block_it->second);
    }

    const auto& up = model.upsamplers.at(id);
    Tensor upsampled = conv_transpose2d(need({id.i + 1, id.j - 1}), up.weight, up.bias, 2);
    std::vector<Tensor> parts;
    if (model.config.nested) {
        for (int k = 0; k < id.j; ++k) parts.push_back(need({id.i, k}));
    } else {
        parts.push_back(need({id.i, 0}));
    }
    parts.push_back(std::move(upsampled));
    return vgg_block(concat_channels(parts), block_it->second);
}

Tensor forward(const UNetPPModel& model, const Tensor& lf_bilinear, std::vector<NodeId>* trace) {
    if (lf_bilinear.ndim() != 4 || lf_bilinear.dim(1) != model.config.in_channels) {
        throw DimensionError("forward input must be [N," + std::to_string(model.config.in_channels) +
                             ",H,W], got " + shape_str(lf_bilinear.shape()));
    }
    const std::int64_t divisor = model.config.downsample_divisor();
    if (lf_bilinear.dim(2) % divisor != 0 || lf_bilinear.dim(3) % divisor != 0) {
        throw DimensionError("input spatial dims " + std::to_string(lf_bilinear.dim(3)) + "x" +
                             std::to_string(lf_bilinear.dim(2)) + " must be divisible by " +
                             std::to_string(divisor));
    }

    std::map<NodeId, Tensor> cached;
    const int levels = model.config.levels;
    for (int j = 0; j < levels; ++j) {
        for (int i = 0; i + j <= levels - 1; ++i) {
            const NodeId id{i, j};
            if (!model.blocks.count(id)) continue;
            cached.emplace(id, node_forward(id, cached, model, lf_bilinear));
            if (trace) trace->push_back(id);
        }
    }
    const Tensor& top = cached.at({0, levels - 1});
    return conv2d(top, model.head.weight, model.head.bias, 0, 1);
}

Tensor super_resolve(const UNetPPModel& model, const Tensor& lf_bilinear, scalar clamp_lo,
                     scalar clamp_hi) {
    Tensor residual = forward(model, lf_bilinear);
    return clamp(add(lf_bilinear, residual), clamp_lo, clamp_hi);
}

}  // namespace nusr
