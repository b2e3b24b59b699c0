#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dgsct/attention.hpp"
#include "dgsct/ops.hpp"
#include "dgsct/patch_embed.hpp"

namespace dgsct {

/// One frozen transformer layer: multi-head self-attention and a two-layer
/// MLP, no normalization. Frozen weights never require gradients.
struct EncoderLayerParams {
    Tensor w_query;   // C x C
    Tensor w_key;     // C x C
    Tensor w_value;   // C x C
    Tensor w_out;     // C x C
    Tensor mlp_w1;    // C x H
    Tensor mlp_b1;    // 1 x H
    Tensor mlp_w2;    // H x C
    Tensor mlp_b2;    // 1 x C
    int heads = 1;

    std::vector<const Tensor*> tensors() const;
};

/// Simulated pre-trained layer: seeded random weights, flagged frozen.
EncoderLayerParams make_frozen_layer(int channels, int heads, Rng& rng);

/// Trainable linear classifier over pooled concatenated features.
struct ClassifierHead {
    Tensor weight;  // (C_v + C_a) x K
    Tensor bias;    // 1 x K
};

ClassifierHead make_head(int in_dim, int classes, Rng& rng);

/// Frozen dual-modality encoder with one DG-SCT module per layer.
struct DualEncoderStack {
    std::vector<EncoderLayerParams> visual_layers;
    std::vector<EncoderLayerParams> audio_layers;
    std::vector<DgSctParams> dgsct_per_layer;
    DgSctHyper hyper;
    ClassifierHead head;
    bool delta_mode = false;  // residual adds only the attention delta
    DirectionMask mask;       // direction ablations

    int layer_count() const { return static_cast<int>(visual_layers.size()); }
    std::vector<std::pair<std::string, Tensor*>> trainable_tensors();
};

/// Scaled dot-product multi-head self-attention over the tokens of each
/// timestep independently. x is T x N x C.
Tensor mha_forward(const Tensor& x, const EncoderLayerParams& params);

struct LayerOutput {
    TokenGrid v;
    TokenGrid a;
    AttentionBundle bundle;
};

/// One layer of the dual stack: residual MHA and MLP blocks with the DG-SCT
/// module injected after each, in both directions.
LayerOutput layer_forward(const TokenGrid& v, const TokenGrid& a, const EncoderLayerParams& layer_v,
                          const EncoderLayerParams& layer_a, const DgSctParams& dgsct,
                          const DgSctHyper& hyper, bool apply_temporal, bool delta_mode,
                          DirectionMask mask = {});

struct StackOutput {
    TokenGrid v_feat;
    TokenGrid a_feat;
    std::vector<AttentionBundle> bundles;  // one per layer
};

/// All layers; temporal gates fire only in the last one.
StackOutput stack_forward(const TokenGrid& v, const TokenGrid& a, const DualEncoderStack& stack);

/// Per-timestep logits over K classes from token-mean-pooled concatenated
/// features, T x K.
Tensor classify(const TokenGrid& v_feat, const TokenGrid& a_feat, const ClassifierHead& head);

}  // namespace dgsct
