#include "dgsct/encoder.hpp"

#include <cmath>

namespace dgsct {

namespace {

// x is T x a x b, w is b x c: one flattened product, T x a x c.
Tensor stack_matmul(const Tensor& x, const Tensor& w) {
    const int t = x.shape()[0], a = x.shape()[1], b = x.shape()[2];
    return reshape(matmul(reshape(x, {t * a, b}), w), {t, a, w.shape()[1]});
}

}  // namespace

std::vector<const Tensor*> EncoderLayerParams::tensors() const {
    return {&w_query, &w_key, &w_value, &w_out, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2};
}

EncoderLayerParams make_frozen_layer(int channels, int heads, Rng& rng) {
    if (channels % heads != 0) {
        throw InvalidConfig("encoder channels must be divisible by the head count");
    }
    const int hidden = 2 * channels;
    EncoderLayerParams p;
    p.w_query = Tensor::uniform_init({channels, channels}, channels, rng, false);
    p.w_key = Tensor::uniform_init({channels, channels}, channels, rng, false);
    p.w_value = Tensor::uniform_init({channels, channels}, channels, rng, false);
    p.w_out = Tensor::uniform_init({channels, channels}, channels, rng, false);
    p.mlp_w1 = Tensor::uniform_init({channels, hidden}, channels, rng, false);
    p.mlp_b1 = Tensor::zeros({1, hidden});
    p.mlp_w2 = Tensor::uniform_init({hidden, channels}, hidden, rng, false);
    p.mlp_b2 = Tensor::zeros({1, channels});
    p.heads = heads;
    return p;
}

ClassifierHead make_head(int in_dim, int classes, Rng& rng) {
    // Zero start: the first logits are uniform regardless of the feature
    // scale the frozen encoder produces, so cross-entropy begins at log K.
    (void)rng;
    ClassifierHead h;
    h.weight = Tensor::zeros({in_dim, classes}, true);
    h.bias = Tensor::zeros({1, classes}, true);
    return h;
}

std::vector<std::pair<std::string, Tensor*>> DualEncoderStack::trainable_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t l = 0; l < dgsct_per_layer.size(); ++l) {
        for (auto& [name, t] : dgsct_per_layer[l].tensors()) {
            out.emplace_back("layer" + std::to_string(l) + "." + name, t);
        }
    }
    out.emplace_back("head.weight", &head.weight);
    out.emplace_back("head.bias", &head.bias);
    return out;
}

Tensor mha_forward(const Tensor& x, const EncoderLayerParams& params) {
    if (x.rank() != 3) throw ShapeMismatch("mha_forward: input must be T x N x C");
    const int c = x.shape()[2];
    if (c % params.heads != 0) {
        throw ShapeMismatch("mha_forward: channels not divisible by head count");
    }
    const int head_dim = c / params.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Tensor q = stack_matmul(x, params.w_query);  // T x N x C
    Tensor k = stack_matmul(x, params.w_key);
    Tensor v = stack_matmul(x, params.w_value);
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<std::size_t>(params.heads));
    for (int h = 0; h < params.heads; ++h) {
        Tensor qh = narrow(q, 2, h * head_dim, head_dim);
        Tensor kh = narrow(k, 2, h * head_dim, head_dim);
        Tensor vh = narrow(v, 2, h * head_dim, head_dim);
        Tensor scores = scale(matmul_batched(qh, permute_last2(kh)), inv_sqrt);  // T x N x N
        Tensor probs = softmax_axis(scores, 2);
        head_outs.push_back(matmul_batched(probs, vh));  // T x N x head_dim
    }
    Tensor merged = head_outs.size() == 1 ? head_outs.front() : concat(head_outs, 2);
    return stack_matmul(merged, params.w_out);
}

namespace {

// Two-layer MLP applied per token: reshape to (T*N) x C, project, GELU,
// project back.
Tensor mlp_forward(const Tensor& x, const EncoderLayerParams& params) {
    const int t_len = x.shape()[0], n = x.shape()[1], c = x.shape()[2];
    Tensor flat = reshape(x, {t_len * n, c});
    Tensor hidden = gelu_map(add(matmul(flat, params.mlp_w1), params.mlp_b1));
    Tensor out = add(matmul(hidden, params.mlp_w2), params.mlp_b2);
    return reshape(out, {t_len, n, c});
}

// The DG-SCT residual term: modulated features, or just the attention-induced
// change in delta mode.
Tensor omega_term(const TokenGrid& modulated, const TokenGrid& original, bool delta_mode) {
    if (!delta_mode) return modulated.tokens;
    return sub(modulated.tokens, original.tokens);
}

}  // namespace

LayerOutput layer_forward(const TokenGrid& v, const TokenGrid& a, const EncoderLayerParams& layer_v,
                          const EncoderLayerParams& layer_a, const DgSctParams& dgsct,
                          const DgSctHyper& hyper, bool apply_temporal, bool delta_mode,
                          DirectionMask mask) {
    const bool any_direction = mask.a2v || mask.v2a;

    // First injection, after MHA.
    TokenGrid v_y = v;
    TokenGrid a_y = a;
    v_y.tokens = add(v.tokens, mha_forward(v.tokens, layer_v));
    a_y.tokens = add(a.tokens, mha_forward(a.tokens, layer_a));
    if (any_direction) {
        DgSctOutput first = dgsct_forward(a, v, dgsct, hyper, false, mask);
        if (mask.a2v) v_y.tokens = add(v_y.tokens, omega_term(first.v_out, v, delta_mode));
        if (mask.v2a) a_y.tokens = add(a_y.tokens, omega_term(first.a_out, a, delta_mode));
    }

    // Second injection, after the MLP; temporal gates only here.
    LayerOutput out;
    out.v = v_y;
    out.a = a_y;
    out.v.tokens = add(v_y.tokens, mlp_forward(v_y.tokens, layer_v));
    out.a.tokens = add(a_y.tokens, mlp_forward(a_y.tokens, layer_a));
    if (any_direction) {
        DgSctOutput second = dgsct_forward(a_y, v_y, dgsct, hyper, apply_temporal, mask);
        if (mask.a2v) out.v.tokens = add(out.v.tokens, omega_term(second.v_out, v_y, delta_mode));
        if (mask.v2a) out.a.tokens = add(out.a.tokens, omega_term(second.a_out, a_y, delta_mode));
        out.bundle = second.bundle;
    }
    return out;
}

StackOutput stack_forward(const TokenGrid& v, const TokenGrid& a, const DualEncoderStack& stack) {
    if (stack.visual_layers.size() != stack.audio_layers.size() ||
        stack.visual_layers.size() != stack.dgsct_per_layer.size()) {
        throw InvalidConfig("stack_forward: layer lists must have equal length");
    }
    StackOutput out;
    out.v_feat = v;
    out.a_feat = a;
    const int layers = stack.layer_count();
    for (int l = 0; l < layers; ++l) {
        const bool last = (l == layers - 1);
        LayerOutput lo = layer_forward(out.v_feat, out.a_feat, stack.visual_layers[static_cast<std::size_t>(l)],
                                       stack.audio_layers[static_cast<std::size_t>(l)],
                                       stack.dgsct_per_layer[static_cast<std::size_t>(l)], stack.hyper,
                                       last, stack.delta_mode, stack.mask);
        out.v_feat = lo.v;
        out.a_feat = lo.a;
        out.bundles.push_back(std::move(lo.bundle));
    }
    return out;
}

Tensor classify(const TokenGrid& v_feat, const TokenGrid& a_feat, const ClassifierHead& head) {
    if (v_feat.timesteps() != a_feat.timesteps()) {
        throw TimestepMismatch("classify: feature timestep counts differ");
    }
    Tensor pooled_v = reduce_mean(v_feat.tokens, 1);  // T x C_v
    Tensor pooled_a = reduce_mean(a_feat.tokens, 1);  // T x C_a
    Tensor joint = concat({pooled_v, pooled_a}, 1);
    if (head.weight.shape()[0] != joint.shape()[1]) {
        throw ShapeMismatch("classify: head input width does not match pooled features");
    }
    return add(matmul(joint, head.weight), head.bias);
}

}  // namespace dgsct
