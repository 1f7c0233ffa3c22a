#pragma once

#include "nusr/tensor.hpp"

namespace nusr {

// 2-D cross-correlation (no kernel flip), the convention of the architectures
// this engine serves. input [N,Cin,H,W], weight [Cout,Cin,kH,kW] with odd
// kH,kW, bias [Cout]. Output [N,Cout,H',W'] with
// H' = (H + 2*padding - kH)/stride + 1. Differentiable in all three tensors.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::int64_t padding, std::int64_t stride);

// Transposed convolution, fixed to the 2x2 kernel / stride-2 configuration:
// input [N,C,H,W], weight [C,Cout,2,2], bias [Cout] -> [N,Cout,2H,2W].
// Adjoint of a stride-2 conv2d.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        std::int64_t stride = 2);

// 2x2 window, stride 2. H and W must be even. Backward routes the gradient to
// the argmax element; ties break to the first element in row-major order.
Tensor maxpool2d(const Tensor& input);

Tensor relu(const Tensor& input);

// Stacks inputs along the channel axis; all must share N, H, W.
Tensor concat_channels(const std::vector<Tensor>& inputs);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& a, scalar c);
Tensor square(const Tensor& a);
Tensor sum(const Tensor& a);   // -> shape [1]
Tensor mean(const Tensor& a);  // -> shape [1]
Tensor log(const Tensor& a);   // natural log; input must be strictly positive

// Seeds d(loss)/d(loss) = 1 and replays the active graph in reverse. loss must
// be a single-element tensor produced under a live Graph.
void backward(const Tensor& loss);

// Elementwise clamp on data only; never recorded, output carries no gradient.
Tensor clamp(const Tensor& a, scalar lo, scalar hi);

}  // namespace nusr
