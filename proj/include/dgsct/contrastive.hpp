#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dgsct/ops.hpp"
#include "dgsct/patch_embed.hpp"
#include "dgsct/tensor.hpp"

namespace dgsct {

/// Paired embeddings in the shared space, one row per sample, rows unit-norm.
struct EmbeddingSet {
    Tensor e_v;  // N x D
    Tensor e_a;  // N x D
    Tensor t_v;  // N x D
    Tensor t_a;  // N x D
};

/// Learnable softmax temperatures, stored in log space so they stay positive.
struct Temperatures {
    Tensor log_tau_v;  // scalar
    Tensor log_tau_a;  // scalar

    Tensor tau_v() const { return exp_map(log_tau_v); }
    Tensor tau_a() const { return exp_map(log_tau_a); }
};

Temperatures make_temperatures(double initial = 0.07);

/// Two-layer ReLU MLP.
struct MlpParams {
    Tensor w1;  // in x hidden
    Tensor b1;  // 1 x hidden
    Tensor w2;  // hidden x out
    Tensor b2;  // 1 x out
};

Tensor mlp_forward2(const Tensor& x, const MlpParams& mlp);

/// Projection heads for the four branches plus the temperatures.
struct ContrastiveParams {
    MlpParams mlp_v;
    MlpParams mlp_a;
    MlpParams mlp_text_v;
    MlpParams mlp_text_a;
    Temperatures temps;

    std::vector<std::pair<std::string, Tensor*>> tensors();
};

ContrastiveParams make_contrastive_params(int c_v, int c_a, int text_dim, int shared_dim,
                                          int hidden, Rng& rng);

/// Token-mean-pools both feature grids, projects all four branches into the
/// shared space and row-normalizes. Rows are indexed by timestep, so the
/// timestep count is the batch size N.
EmbeddingSet embed_modalities(const TokenGrid& v_feat, const TokenGrid& a_feat,
                              const Tensor& text_v, const Tensor& text_a,
                              const ContrastiveParams& params);

/// Symmetric InfoNCE over the N pairs: mean negative log-likelihood of the
/// diagonal under row softmax of E T'/tau, both directions. The logit scale
/// 1/tau is capped at 100.
Tensor contrastive_loss(const Tensor& embeddings, const Tensor& text, const Tensor& tau);

/// Dynamic convex weights from the two branches' matching scores.
struct ModalityWeights {
    Tensor y_v;  // mean diagonal softmax probability, visual-text branch
    Tensor y_a;
    Tensor w1;
    Tensor w2;
};

ModalityWeights modality_weights(const Tensor& sim_v, const Tensor& sim_a);

/// w1 * loss_v + w2 * loss_a.
Tensor combined_loss(const Tensor& loss_v, const Tensor& loss_a, const ModalityWeights& weights);

/// Inference-time per-sample weighting: row i holds the visual and audio
/// share of that sample's diagonal confidence, N x 2.
Tensor per_sample_weights(const Tensor& sim_v, const Tensor& sim_a);

}  // namespace dgsct
