#pragma once

#include <vector>

#include "dgsct/tensor.hpp"

namespace dgsct {

// Differentiable operations over Tensor. Every function validates shapes up
// front, computes eagerly, and appends a node to the current tape whenever an
// input is grad-active. Finiteness is a type invariant: the Tensor
// constructor rejects non-finite payloads, so operation inputs are finite by
// construction and each output is checked once as it is built. Broadcast rule
// throughout: ranks must match and an extent of 1 in the second operand
// stretches to the first operand's extent; there is no implicit rank
// promotion.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

Tensor matmul(const Tensor& a, const Tensor& b);
/// Per-slice product of rank-3 stacks: (T x m x k) @ (T x k x n) -> T x m x n.
Tensor matmul_batched(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& x);
/// Swaps the trailing two axes of a rank-3 tensor.
Tensor permute_last2(const Tensor& x);
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor broadcast_to(const Tensor& x, const std::vector<int>& shape);
Tensor narrow(const Tensor& x, int axis, int start, int len);
Tensor concat(const std::vector<Tensor>& parts, int axis);

Tensor reduce_mean(const Tensor& x, int axis);
Tensor reduce_sum(const Tensor& x, int axis);
Tensor reduce_sum_all(const Tensor& x);
Tensor reduce_mean_all(const Tensor& x);

Tensor sigmoid_map(const Tensor& x);
Tensor tanh_map(const Tensor& x);
Tensor relu_map(const Tensor& x);
Tensor gelu_map(const Tensor& x);
Tensor exp_map(const Tensor& x);
Tensor pow_map(const Tensor& x, double exponent);
Tensor clamp_max(const Tensor& x, double cap);

Tensor softmax_axis(const Tensor& x, int axis);
Tensor log_softmax_axis(const Tensor& x, int axis);

/// Cross-correlation with zero padding and stride 1. x is C_in x H x W,
/// kernel is C_out x C_in x k x k with k odd and padding (k-1)/2, so the
/// spatial extent is preserved.
Tensor conv2d(const Tensor& x, const Tensor& kernel, int padding);
/// conv2d over a stack of planes: x is T x C_in x H x W, one shared kernel.
Tensor conv2d_batched(const Tensor& x, const Tensor& kernel, int padding);

/// Single-layer tanh RNN, h_0 = 0. Row convention: h_t = tanh(x_t * w_in +
/// h_{t-1} * w_hidden + bias).
struct RnnParams {
    Tensor w_in;      // C x C_h
    Tensor w_hidden;  // C_h x C_h
    Tensor bias;      // 1 x C_h
};

/// seq is T x C; returns all hidden states, T x C_h.
Tensor rnn_forward(const Tensor& seq, const RnnParams& params);

}  // namespace dgsct
