#pragma once

#include <cstdint>
#include <string>

namespace dgsct {

/// Everything a command needs: data extents, model widths, attention weights
/// and training controls. Defaults are the desk-scale configuration; a flat
/// `key = value` file and command-line flags override them (flags win).
struct RunConfig {
    std::uint64_t seed = 42;

    // Data extents.
    int timesteps = 4;   // T
    int height = 16;     // H
    int width = 16;      // W
    int mel_bins = 16;   // L (time bins per segment)
    int freq_bins = 16;  // F
    int patch_v = 4;     // P_v
    int patch_a = 4;     // P_a

    // Model widths.
    int channels_v = 16;  // C_v
    int channels_a = 16;  // C_a
    int hidden_dim = 16;  // d
    int layers = 2;
    int heads = 2;
    int classes = 4;  // K, including the background class

    // Attention weights.
    double alpha = 0.3;
    double beta = 0.05;
    double gamma = 0.1;
    bool delta_mode = false;

    // Training controls.
    int steps = 1200;
    double lr = 4e-2;
    int batch = 2;
    double noise = 0.5;  // generator noise sigma

    std::string out_path;

    int visual_grid_rows() const { return height / patch_v; }
    int visual_grid_cols() const { return width / patch_v; }
    int visual_tokens() const { return visual_grid_rows() * visual_grid_cols(); }
    int audio_grid_rows() const { return mel_bins / patch_a; }
    int audio_grid_cols() const { return freq_bins / patch_a; }
    int audio_tokens() const { return audio_grid_rows() * audio_grid_cols(); }

    /// Throws InvalidConfig when an invariant is broken.
    void validate() const;
};

/// Small profile for gradient checking: 2 layers, C=4, N=4, T=2.
RunConfig gradcheck_defaults();

/// Parses a flat `key = value` file over `base`. '#' starts a comment.
RunConfig load_config_file(const std::string& path, const RunConfig& base);

/// Applies one key/value pair; throws InvalidConfig for unknown keys.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace dgsct
