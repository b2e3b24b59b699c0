#pragma once

#include <vector>

#include "dgsct/config.hpp"
#include "dgsct/patch_embed.hpp"

namespace dgsct {

/// One paired clip: class patterns planted jointly in both modalities at
/// event timesteps, noise everywhere, background label K-1 elsewhere.
struct SyntheticPair {
    RawVisualClip visual;
    RawAudioClip audio;
    std::vector<int> labels;       // per timestep, in [0, K)
    std::vector<bool> event_mask;  // true where the event is planted
    int event_class = 0;
};

/// Deterministic given cfg.seed. Sample i reads only its own generator
/// stream (seed, i), so any generation order produces identical bits.
/// Event classes cycle round-robin across samples. Class k places a bright
/// patch at a class-specific grid cell of the frames and a bright band at a
/// class-specific frequency column of the mel plane; the pattern content is
/// identical across classes, only its position differs, so mean-pooled
/// features carry no class signal without spatial structure.
std::vector<SyntheticPair> generate_synthetic_pairs(const RunConfig& cfg, int count);

/// Top-left grid cell of class k's visual pattern block.
int visual_pattern_cell(const RunConfig& cfg, int event_class);
/// Cell extent of the visual pattern block along one axis.
int visual_block_rows(const RunConfig& cfg);
int visual_block_cols(const RunConfig& cfg);
/// Frequency-grid column carrying class k's audio band.
int audio_pattern_band(const RunConfig& cfg, int event_class);

/// Pattern brightness added on top of the noise floor. High enough that the
/// per-token position signal survives the beta-scaled spatial path; the
/// pooled features the baseline sees stay position-blind at any amplitude.
inline constexpr double kPatternAmplitude = 10.0;

}  // namespace dgsct
