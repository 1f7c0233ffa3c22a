#pragma once

#include <compare>
#include <map>

#include "nusr/tensor.hpp"

namespace nusr {

// (i, j): i indexes the encoder depth, j the position along the dense skip
// pathway. j == 0 is the encoder column; (0, levels-1) feeds the output head.
struct NodeId {
    int i = 0;
    int j = 0;
    auto operator<=>(const NodeId&) const = default;
};

struct UNetPPConfig {
    int levels = 5;
    std::vector<std::int64_t> channels = {32, 64, 128, 256, 512};
    std::int64_t in_channels = 1;
    std::int64_t out_channels = 1;
    // true: full nested node set; false: plain U-Net ablation (encoder column
    // plus one decoder node per level).
    bool nested = true;

    void validate() const;
    std::vector<NodeId> node_ids() const;
    // Channel width entering block (i,j): j skip inputs of C_i each plus the
    // upsampled C_i (j == 0: the image or the pooled previous level).
    std::int64_t block_in_channels(NodeId id) const;
    std::int64_t downsample_divisor() const;  // 2^(levels-1)
};

struct Conv2dParams {
    Tensor weight;
    Tensor bias;
};

struct VggBlockParams {
    Conv2dParams conv1;
    Conv2dParams conv2;
};

// Two 3x3 convolutions (padding 1), each followed by ReLU. No normalization
// layers anywhere in this network.
Tensor vgg_block(const Tensor& x, const VggBlockParams& params);

struct UNetPPModel {
    UNetPPConfig config;
    std::map<NodeId, VggBlockParams> blocks;
    // keyed by the consuming node (i,j), j >= 1; upsamples x^{i+1,j-1} from
    // C_{i+1} to C_i channels
    std::map<NodeId, Conv2dParams> upsamplers;
    Conv2dParams head;  // 1x1, no activation (the residual target is signed)

    static UNetPPModel create(const UNetPPConfig& config, std::uint64_t seed);

    // Fixed-order (name, tensor) view over every parameter; the order defines
    // checkpoint layout and optimizer state alignment.
    std::vector<std::pair<std::string, Tensor>> parameters() const;
    std::int64_t parameter_count() const;
    void zero_grad();
};

// Evaluates node (i,j) given the already-computed prerequisite outputs.
Tensor node_forward(NodeId id, const std::map<NodeId, Tensor>& cached, const UNetPPModel& model,
                    const Tensor& input);

// Full forward pass; returns the predicted residual (same shape as input,
// unbounded sign). If trace is non-null it receives the executed node order.
Tensor forward(const UNetPPModel& model, const Tensor& lf_bilinear,
               std::vector<NodeId>* trace = nullptr);

// lf + predicted residual, clamped to the normalization range for display.
// Training losses are computed on the unclamped forward() output.
Tensor super_resolve(const UNetPPModel& model, const Tensor& lf_bilinear,
                     scalar clamp_lo = scalar(-0.5), scalar clamp_hi = scalar(0.5));

}  // namespace nusr
