#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgsct/config.hpp"
#include "dgsct/contrastive.hpp"
#include "dgsct/encoder.hpp"
#include "dgsct/synthetic.hpp"

namespace dgsct {

/// The full model: frozen patch embeddings plus the dual encoder stack with
/// its trainable DG-SCT modules and head.
struct Model {
    Tensor visual_embed;  // frozen, (P_v^2 * 3) x C_v
    Tensor audio_embed;   // frozen, (P_a^2) x C_a
    DualEncoderStack stack;
};

/// Builds the seeded model for a configuration. The "pre-trained" encoder is
/// simulated: seeded random weights flagged frozen.
Model make_model(const RunConfig& cfg);

/// Tokenize one clip pair with the model's frozen embeddings.
TokenGrid tokens_visual(const Model& model, const RunConfig& cfg, const RawVisualClip& clip);
TokenGrid tokens_audio(const Model& model, const RunConfig& cfg, const RawAudioClip& clip);

/// Per-timestep logits for one synthetic pair.
Tensor model_logits(const Model& model, const RunConfig& cfg, const SyntheticPair& pair);

/// Mean per-timestep cross-entropy of logits against integer labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

enum class Ablation { full, no_s, no_c, no_t, a2v_only, v2a_only, none };

Ablation parse_ablation(const std::string& name);
const char* ablation_name(Ablation ablation);
/// Zeroes the corresponding attention weight or switches a direction off.
void apply_ablation(DualEncoderStack& stack, Ablation ablation);

struct TrainResult {
    std::vector<double> epoch_losses;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double accuracy = 0.0;
    std::uint64_t frozen_hash_before = 0;
    std::uint64_t frozen_hash_after = 0;
    std::uint64_t trainable_hash_before = 0;
    std::uint64_t trainable_hash_after = 0;
};

/// Plain SGD on the DG-SCT parameters and head; encoders stay frozen.
/// Training set and held-out split are seeded from cfg. Throws
/// DivergenceDetected if the loss stops being finite.
TrainResult train_loop(const RunConfig& cfg, Ablation ablation);

/// Per-timestep argmax accuracy over a clip set.
double evaluate_accuracy(const Model& model, const RunConfig& cfg,
                         const std::vector<SyntheticPair>& clips);

/// FNV-1a over the raw bytes of the tensor data.
std::uint64_t hash_tensor_bytes(const Tensor& t);
/// Hash of every frozen tensor in the model (patch embeddings and encoders).
std::uint64_t frozen_hash(const Model& model);

struct ParamCounts {
    std::size_t trainable = 0;
    std::size_t frozen = 0;
    std::size_t psi = 0;  // prompt-projection share, subset of trainable

    std::size_t total() const { return trainable + frozen; }
    double trainable_pct() const;
    double frozen_pct() const;
    double psi_pct_of_trainable() const;
};

ParamCounts count_params(const RunConfig& cfg);

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst = 0.0;
    bool pass = false;
};

/// Finite-difference check of the classification loss over every DG-SCT
/// tensor and the head, plus the combined contrastive objective over the
/// projection MLPs and temperatures. Tensor and activation sizes are capped
/// at 1e4 elements. `corrupt_gradient` is a test hook that inserts a
/// deliberate graph break so the analytic gradient misses one term.
GradCheckReport grad_check_run(const RunConfig& cfg, bool corrupt_gradient = false);

/// Clip counts of the seeded training and held-out splits.
inline constexpr int kTrainClips = 128;
inline constexpr int kEvalClips = 128;

}  // namespace dgsct
