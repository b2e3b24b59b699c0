#include "dgsct/patch_embed.hpp"

#include <string>
#include <vector>

namespace dgsct {

namespace {

void check_divisible(int extent, int patch, const char* which) {
    if (patch <= 0) throw InvalidConfig("patch size must be positive");
    if (extent % patch != 0) {
        throw IndivisibleExtent(std::string(which) + " extent " + std::to_string(extent) +
                                " is not divisible by patch size " + std::to_string(patch));
    }
}

// Gathers the flattened patches of one plane stack into an N x raw matrix.
// planes indexes (T, H, W, D) row-major with D trailing values per cell.
Tensor gather_patches(const std::vector<double>& data, int t, int h, int w, int depth, int patch) {
    const int rows = h / patch;
    const int cols = w / patch;
    const int raw = patch * patch * depth;
    std::vector<double> out(static_cast<std::size_t>(rows) * cols * raw);
    const std::size_t plane = static_cast<std::size_t>(h) * w * depth;
    const std::size_t base = static_cast<std::size_t>(t) * plane;
    std::size_t cursor = 0;
    for (int gy = 0; gy < rows; ++gy) {
        for (int gx = 0; gx < cols; ++gx) {
            for (int py = 0; py < patch; ++py) {
                const int y = gy * patch + py;
                for (int px = 0; px < patch; ++px) {
                    const int x = gx * patch + px;
                    const std::size_t src = base + (static_cast<std::size_t>(y) * w + x) * depth;
                    for (int d = 0; d < depth; ++d) out[cursor++] = data[src + d];
                }
            }
        }
    }
    return Tensor({rows * cols, raw}, std::move(out));
}

TokenGrid patchify(const Tensor& planes, int depth, int patch, const Tensor& embed,
                   Modality modality, const char* h_name, const char* w_name) {
    if (planes.rank() != (depth > 1 ? 4 : 3)) {
        throw ShapeMismatch("patchify: unexpected clip rank");
    }
    const int t_len = planes.shape()[0];
    const int h = planes.shape()[1];
    const int w = planes.shape()[2];
    if (t_len < 1) throw ShapeMismatch("patchify: clip must have at least one timestep");
    check_divisible(h, patch, h_name);
    check_divisible(w, patch, w_name);
    const int raw = patch * patch * depth;
    if (embed.rank() != 2 || embed.shape()[0] != raw) {
        throw ShapeMismatch("patchify: embedding must map " + std::to_string(raw) + " raw values");
    }
    const int channels = embed.shape()[1];
    const int n = (h / patch) * (w / patch);

    std::vector<Tensor> steps;
    steps.reserve(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
        Tensor rows = gather_patches(planes.data(), t, h, w, depth, patch);
        steps.push_back(reshape(matmul(rows, embed), {1, n, channels}));
    }
    TokenGrid grid;
    grid.tokens = steps.size() == 1 ? steps.front() : concat(steps, 0);
    grid.rows = h / patch;
    grid.cols = w / patch;
    grid.modality = modality;
    return grid;
}

}  // namespace

TokenGrid patchify_visual(const RawVisualClip& clip, int patch, const Tensor& embed) {
    if (!clip.frames.defined() || clip.frames.rank() != 4 || clip.frames.shape()[3] != 3) {
        throw ShapeMismatch("patchify_visual: frames must be T x H x W x 3");
    }
    return patchify(clip.frames, 3, patch, embed, Modality::visual, "height", "width");
}

TokenGrid patchify_audio(const RawAudioClip& clip, int patch, const Tensor& embed) {
    if (!clip.mel.defined() || clip.mel.rank() != 3) {
        throw ShapeMismatch("patchify_audio: mel must be T x L x F");
    }
    return patchify(clip.mel, 1, patch, embed, Modality::audio, "time bins", "frequency bins");
}

}  // namespace dgsct
