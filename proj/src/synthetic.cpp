#include "dgsct/synthetic.hpp"

namespace dgsct {

int visual_block_rows(const RunConfig& cfg) { return cfg.visual_grid_rows() >= 2 ? 2 : 1; }

int visual_block_cols(const RunConfig& cfg) { return cfg.visual_grid_cols() >= 2 ? 2 : 1; }

int visual_pattern_cell(const RunConfig& cfg, int event_class) {
    // Anchors range over the positions where the block still fits; classes
    // spread across them so every class gets a distinct placement.
    const int anchor_rows = cfg.visual_grid_rows() - visual_block_rows(cfg) + 1;
    const int anchor_cols = cfg.visual_grid_cols() - visual_block_cols(cfg) + 1;
    const int anchors = anchor_rows * anchor_cols;
    const int event_classes = cfg.classes - 1;
    const int anchor = event_classes == 1 ? 0 : (event_class * (anchors - 1)) / (event_classes - 1);
    const int row = anchor / anchor_cols;
    const int col = anchor % anchor_cols;
    return row * cfg.visual_grid_cols() + col;
}

int audio_pattern_band(const RunConfig& cfg, int event_class) {
    const int bands = cfg.audio_grid_cols();
    const int event_classes = cfg.classes - 1;
    if (event_classes == 1) return 0;
    return (event_class * (bands - 1)) / (event_classes - 1);
}

std::vector<SyntheticPair> generate_synthetic_pairs(const RunConfig& cfg, int count) {
    cfg.validate();
    if (count < 0) throw InvalidConfig("sample count must be non-negative");
    const int event_classes_total = cfg.classes - 1;
    const int visual_anchors =
        (cfg.visual_grid_rows() - visual_block_rows(cfg) + 1) *
        (cfg.visual_grid_cols() - visual_block_cols(cfg) + 1);
    if (event_classes_total > visual_anchors) {
        throw InvalidConfig("more event classes than distinct visual pattern placements");
    }
    if (event_classes_total > cfg.audio_grid_cols()) {
        throw InvalidConfig("more event classes than audio frequency bands");
    }

    const int t_len = cfg.timesteps;
    const int event_classes = cfg.classes - 1;
    std::vector<SyntheticPair> out;
    out.reserve(static_cast<std::size_t>(count));

    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::for_stream(cfg.seed, static_cast<std::uint64_t>(i));
        SyntheticPair pair;
        pair.event_class = i % event_classes;
        pair.event_mask.resize(static_cast<std::size_t>(t_len));
        pair.labels.resize(static_cast<std::size_t>(t_len));
        for (int t = 0; t < t_len; ++t) {
            const bool event = rng.uniform() < 0.5;
            pair.event_mask[static_cast<std::size_t>(t)] = event;
            pair.labels[static_cast<std::size_t>(t)] = event ? pair.event_class : cfg.classes - 1;
        }

        // Visual pattern: a bright patch-aligned block of grid cells.
        const int cell = visual_pattern_cell(cfg, pair.event_class);
        const int cell_y = (cell / cfg.visual_grid_cols()) * cfg.patch_v;
        const int cell_x = (cell % cfg.visual_grid_cols()) * cfg.patch_v;
        const int block_h = visual_block_rows(cfg) * cfg.patch_v;
        const int block_w = visual_block_cols(cfg) * cfg.patch_v;
        std::vector<double> frames(
            static_cast<std::size_t>(t_len) * cfg.height * cfg.width * 3, 0.0);
        for (int t = 0; t < t_len; ++t) {
            if (!pair.event_mask[static_cast<std::size_t>(t)]) continue;
            for (int py = 0; py < block_h; ++py) {
                for (int px = 0; px < block_w; ++px) {
                    const std::size_t base =
                        ((static_cast<std::size_t>(t) * cfg.height + cell_y + py) * cfg.width +
                         cell_x + px) *
                        3;
                    for (int d = 0; d < 3; ++d) frames[base + d] += kPatternAmplitude;
                }
            }
        }
        for (double& v : frames) v += rng.gaussian(cfg.noise);

        // Audio pattern: one bright frequency band across all time bins.
        const int band = audio_pattern_band(cfg, pair.event_class);
        const int band_f = band * cfg.patch_a;
        std::vector<double> mel(static_cast<std::size_t>(t_len) * cfg.mel_bins * cfg.freq_bins, 0.0);
        for (int t = 0; t < t_len; ++t) {
            if (!pair.event_mask[static_cast<std::size_t>(t)]) continue;
            for (int l = 0; l < cfg.mel_bins; ++l) {
                for (int pf = 0; pf < cfg.patch_a; ++pf) {
                    mel[(static_cast<std::size_t>(t) * cfg.mel_bins + l) * cfg.freq_bins + band_f +
                        pf] += kPatternAmplitude;
                }
            }
        }
        for (double& v : mel) v += rng.gaussian(cfg.noise);

        pair.visual.frames = Tensor({t_len, cfg.height, cfg.width, 3}, std::move(frames));
        pair.audio.mel = Tensor({t_len, cfg.mel_bins, cfg.freq_bins}, std::move(mel));
        out.push_back(std::move(pair));
    }
    return out;
}

}  // namespace dgsct
