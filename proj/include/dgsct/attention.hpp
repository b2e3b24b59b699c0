#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dgsct/ops.hpp"
#include "dgsct/patch_embed.hpp"
#include "dgsct/rng.hpp"
#include "dgsct/tensor.hpp"

namespace dgsct {

/// Weights of the three attention terms and the guidance hidden width.
struct DgSctHyper {
    double alpha = 0.3;   // channel attention
    double beta = 0.05;   // spatial / frequency attention
    double gamma = 0.1;   // temporal gate
    int hidden_dim = 16;  // d (256 at full scale, 16 at desk scale)
};

/// Prompt projection: 3x3 convolution over the source token grid followed by
/// a linear resize of the token axis, so the prompt matches the counterpart
/// modality's channel count and token count.
struct PromptProjection {
    Tensor conv;       // C_tgt x C_src x 3 x 3
    Tensor token_map;  // N_src x N_tgt
};

struct ChannelAttentionParams {
    Tensor theta_prompt;  // C x C, applied to the pooled prompt
    Tensor theta_target;  // C x C, applied to the target tokens
    Tensor phi_w1;        // ceil(C/4) x C
    Tensor phi_b1;        // ceil(C/4) x 1
    Tensor phi_w2;        // C x ceil(C/4)
    Tensor phi_b2;        // C x 1
};

struct SpatialAttentionParams {
    Tensor theta_prompt;  // d x C
    Tensor theta_target;  // d x C
    Tensor theta_out;     // 1 x d
};

/// Gate for one target modality, driven by the other modality's attended
/// features (channel count C_src).
struct TemporalGateParams {
    RnnParams rnn;  // hidden width = C_src
    Tensor head;    // 1 x C_src
};

/// All trainable weights of one guidance direction (source steers target).
struct DirectionParams {
    PromptProjection psi;
    ChannelAttentionParams channel;
    SpatialAttentionParams spatial;
    TemporalGateParams gate;
};

struct DgSctParams {
    DirectionParams a2v;  // audio guides visual
    DirectionParams v2a;  // visual guides audio

    std::vector<std::pair<std::string, Tensor*>> tensors();
    std::vector<std::pair<std::string, const Tensor*>> tensors() const;
};

/// Fresh seeded parameters for channel/token extents (C_v, N_v) and (C_a, N_a).
DgSctParams make_dgsct_params(int c_v, int n_v, int c_a, int n_a, int hidden_dim, Rng& rng);

/// The six maps produced by one forward pass. Gate tensors are left undefined
/// on layers without temporal attention.
struct AttentionBundle {
    Tensor m_vc;  // T x C_v x 1
    Tensor m_ac;  // T x C_a x 1
    Tensor m_vs;  // T x 1 x N_v
    Tensor m_af;  // T x 1 x N_a
    Tensor g_v;   // T x 1
    Tensor g_a;   // T x 1
};

/// Which guidance directions are live; ablations switch one off.
struct DirectionMask {
    bool a2v = true;
    bool v2a = true;
};

/// psi applied to a token grid: prompt in the target modality's dimensions,
/// T x target_channels x target_tokens.
Tensor project_prompt(const TokenGrid& src, int target_channels, int target_tokens,
                      const PromptProjection& psi);

/// Squeeze-excitation style channel map from a cross-modal prompt,
/// T x C x 1 with every element in (0,1).
Tensor channel_attention(const Tensor& prompt, const TokenGrid& target,
                         const ChannelAttentionParams& params);

/// Per-token map from prompt and channel-attentive target features (both
/// T x C x N), T x 1 x N.
Tensor spatial_attention(const Tensor& prompt, const Tensor& target_c,
                         const SpatialAttentionParams& params);

/// Token-mean, RNN, projection, sigmoid: per-timestep gates T x 1.
Tensor temporal_gates(const Tensor& attended_seq, const TemporalGateParams& params);

/// (alpha*m_c + beta*m_s + 1) scaling, then (gamma*g + 1) when a gate is
/// given. Pass gate = nullptr outside the temporal layer.
TokenGrid modulate(const TokenGrid& target, const Tensor& m_c, const Tensor& m_s,
                   const Tensor* gate, const DgSctHyper& hyper);

struct DgSctOutput {
    TokenGrid v_out;
    TokenGrid a_out;
    AttentionBundle bundle;
};

/// Full module: prompts, channel, spatial/frequency and (optionally) temporal
/// attention in both directions. All maps are always computed; a masked-off
/// direction leaves its target modality's features untouched.
DgSctOutput dgsct_forward(const TokenGrid& a, const TokenGrid& v, const DgSctParams& params,
                          const DgSctHyper& hyper, bool apply_temporal, DirectionMask mask = {});

/// Per-token factors (alpha*m_c + beta*m_s + 1), T x C x N; for inspection.
Tensor spatial_channel_factors(const Tensor& m_c, const Tensor& m_s, const DgSctHyper& hyper);
/// Per-timestep factors (gamma*g + 1), T x 1.
Tensor temporal_factors(const Tensor& gate, const DgSctHyper& hyper);

/// Tokens rearranged channel-major, T x C x N.
Tensor channel_major(const TokenGrid& grid);

}  // namespace dgsct
