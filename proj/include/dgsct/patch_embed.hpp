#pragma once

#include "dgsct/ops.hpp"
#include "dgsct/tensor.hpp"

namespace dgsct {

enum class Modality { visual, audio };

/// Per-timestep token matrix for one modality, with the 2-D factorization of
/// the token axis remembered (H'xW' for frames, L'xF' for spectrograms).
struct TokenGrid {
    Tensor tokens;  // T x N x C
    int rows = 0;
    int cols = 0;
    Modality modality = Modality::visual;

    int timesteps() const { return tokens.shape()[0]; }
    int token_count() const { return tokens.shape()[1]; }
    int channels() const { return tokens.shape()[2]; }
};

struct RawVisualClip {
    Tensor frames;  // T x H x W x 3
};

struct RawAudioClip {
    Tensor mel;  // T x L x F
};

/// Splits each frame into non-overlapping patch x patch windows, flattens the
/// raw pixel values of each window (row, column, colour order) and applies the
/// linear embedding. embed is (patch*patch*3) x C.
TokenGrid patchify_visual(const RawVisualClip& clip, int patch, const Tensor& embed);

/// Same scheme on the L x F mel plane. embed is (patch*patch) x C.
TokenGrid patchify_audio(const RawAudioClip& clip, int patch, const Tensor& embed);

}  // namespace dgsct
