#include <vector>

#include "doctest.h"
#include "dgsct/patch_embed.hpp"
#include "dgsct/rng.hpp"

using namespace dgsct;

namespace {

Tensor random_frames(int t, int h, int w, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(t) * h * w * 3);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor({t, h, w, 3}, std::move(v));
}

// Test-side inverse of visual patchify at identity embedding: scatters token
// values back into a T x H x W x 3 array.
Tensor reassemble_visual(const TokenGrid& grid, int patch, int h, int w) {
    const int t_len = grid.timesteps();
    std::vector<double> out(static_cast<std::size_t>(t_len) * h * w * 3, 0.0);
    const int cols = w / patch;
    for (int t = 0; t < t_len; ++t) {
        for (int n = 0; n < grid.token_count(); ++n) {
            const int gy = n / cols;
            const int gx = n % cols;
            int cursor = 0;
            for (int py = 0; py < patch; ++py) {
                for (int px = 0; px < patch; ++px) {
                    for (int d = 0; d < 3; ++d) {
                        const int y = gy * patch + py;
                        const int x = gx * patch + px;
                        out[((static_cast<std::size_t>(t) * h + y) * w + x) * 3 + d] =
                            grid.tokens.at({t, n, cursor++});
                    }
                }
            }
        }
    }
    return Tensor({t_len, h, w, 3}, std::move(out));
}

}  // namespace

TEST_SUITE("patch-embed") {

TEST_CASE("visual patch count and raw width follow from the extents") {
    // Oracle: a 4x4 frame with 2x2 patches has (4/2)*(4/2) = 4 patches of
    // 2*2*3 = 12 raw values each.
    Rng rng(1);
    RawVisualClip clip{random_frames(1, 4, 4, rng)};
    const TokenGrid grid = patchify_visual(clip, 2, Tensor::identity(12));
    CHECK(grid.token_count() == 4);
    CHECK(grid.channels() == 12);
    CHECK(grid.rows == 2);
    CHECK(grid.cols == 2);
}

TEST_CASE("identity embedding reproduces the raw patch values") {
    Rng rng(2);
    RawVisualClip clip{random_frames(2, 4, 6, rng)};
    const TokenGrid grid = patchify_visual(clip, 2, Tensor::identity(12));
    // Spot-check the first pixel of patch (0,1) at t=1: frame value at
    // (y=0, x=2, c=0).
    CHECK(grid.tokens.at({1, 1, 0}) == clip.frames.at({1, 0, 2, 0}));
    // Full bijection: reassembling the tokens restores the frames exactly.
    const Tensor back = reassemble_visual(grid, 2, 4, 6);
    for (std::size_t i = 0; i < back.numel(); ++i) CHECK(back[i] == clip.frames[i]);
}

TEST_CASE("zero frames give zero tokens under any embedding") {
    Rng rng(3);
    RawVisualClip clip{Tensor::zeros({1, 4, 4, 3})};
    Tensor embed({12, 5}, [&] {
        std::vector<double> v(60);
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        return v;
    }());
    const TokenGrid grid = patchify_visual(clip, 2, embed);
    for (std::size_t i = 0; i < grid.tokens.numel(); ++i) CHECK(grid.tokens[i] == 0.0);
}

TEST_CASE("audio patchify counts and degenerate full-plane patch") {
    Rng rng(4);
    std::vector<double> mel(16);
    for (auto& x : mel) x = rng.uniform(0.0, 1.0);
    RawAudioClip clip{Tensor({1, 4, 4}, mel)};

    const TokenGrid quad = patchify_audio(clip, 2, Tensor::identity(4));
    CHECK(quad.token_count() == 4);
    CHECK(quad.channels() == 4);

    const TokenGrid whole = patchify_audio(clip, 4, Tensor::identity(16));
    CHECK(whole.token_count() == 1);
    CHECK(whole.rows == 1);
    CHECK(whole.cols == 1);

    RawAudioClip zero{Tensor::zeros({2, 4, 4})};
    const TokenGrid zgrid = patchify_audio(zero, 2, Tensor::identity(4));
    for (std::size_t i = 0; i < zgrid.tokens.numel(); ++i) CHECK(zgrid.tokens[i] == 0.0);
}

TEST_CASE("indivisible extents are rejected") {
    Rng rng(5);
    RawVisualClip clip{random_frames(1, 4, 6, rng)};
    CHECK_THROWS_AS(patchify_visual(clip, 3, Tensor::identity(27)), IndivisibleExtent);
    RawAudioClip audio{Tensor::zeros({1, 5, 4})};
    CHECK_THROWS_AS(patchify_audio(audio, 2, Tensor::identity(4)), IndivisibleExtent);
}

TEST_CASE("swapping two input patches swaps exactly those tokens") {
    Rng rng(6);
    RawVisualClip clip{random_frames(1, 4, 4, rng)};
    // Swap the pixel blocks of patches 0 (0,0) and 3 (1,1), patch size 2.
    std::vector<double> swapped = clip.frames.data();
    for (int py = 0; py < 2; ++py) {
        for (int px = 0; px < 2; ++px) {
            for (int d = 0; d < 3; ++d) {
                const std::size_t i0 = ((static_cast<std::size_t>(py) * 4) + px) * 3 + d;
                const std::size_t i3 = ((static_cast<std::size_t>(py + 2) * 4) + (px + 2)) * 3 + d;
                std::swap(swapped[i0], swapped[i3]);
            }
        }
    }
    RawVisualClip other{Tensor({1, 4, 4, 3}, swapped)};
    const TokenGrid g1 = patchify_visual(clip, 2, Tensor::identity(12));
    const TokenGrid g2 = patchify_visual(other, 2, Tensor::identity(12));
    for (int c = 0; c < 12; ++c) {
        CHECK(g2.tokens.at({0, 0, c}) == g1.tokens.at({0, 3, c}));
        CHECK(g2.tokens.at({0, 3, c}) == g1.tokens.at({0, 0, c}));
        CHECK(g2.tokens.at({0, 1, c}) == g1.tokens.at({0, 1, c}));
        CHECK(g2.tokens.at({0, 2, c}) == g1.tokens.at({0, 2, c}));
    }
}

}  // TEST_SUITE
