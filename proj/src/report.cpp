#include "dgsct/report.hpp"

#include <cstdio>
#include <fstream>

namespace dgsct {

namespace {

void append_real(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

// T x C x 1 or T x 1 x N map as a [T][len] array.
void append_map2(std::string& out, const Tensor& m) {
    const int t_len = m.shape()[0];
    const std::size_t len = m.numel() / static_cast<std::size_t>(t_len);
    out += '[';
    for (int t = 0; t < t_len; ++t) {
        if (t) out += ',';
        out += '[';
        for (std::size_t i = 0; i < len; ++i) {
            if (i) out += ',';
            append_real(out, m[static_cast<std::size_t>(t) * len + i]);
        }
        out += ']';
    }
    out += ']';
}

// T x 1 gate as a flat [T] array, or null when absent.
void append_gate(std::string& out, const Tensor& g) {
    if (!g.defined()) {
        out += "null";
        return;
    }
    out += '[';
    for (std::size_t i = 0; i < g.numel(); ++i) {
        if (i) out += ',';
        append_real(out, g[i]);
    }
    out += ']';
}

// T x C x N factors as [T][C][N].
void append_factors(std::string& out, const Tensor& f) {
    const int t_len = f.shape()[0], c = f.shape()[1], n = f.shape()[2];
    out += '[';
    for (int t = 0; t < t_len; ++t) {
        if (t) out += ',';
        out += '[';
        for (int i = 0; i < c; ++i) {
            if (i) out += ',';
            out += '[';
            for (int j = 0; j < n; ++j) {
                if (j) out += ',';
                append_real(out, f.at({t, i, j}));
            }
            out += ']';
        }
        out += ']';
    }
    out += ']';
}

void append_config(std::string& out, const RunConfig& cfg) {
    out += "{\"seed\":" + std::to_string(cfg.seed);
    out += ",\"t\":" + std::to_string(cfg.timesteps);
    out += ",\"h\":" + std::to_string(cfg.height);
    out += ",\"w\":" + std::to_string(cfg.width);
    out += ",\"l\":" + std::to_string(cfg.mel_bins);
    out += ",\"f\":" + std::to_string(cfg.freq_bins);
    out += ",\"p_v\":" + std::to_string(cfg.patch_v);
    out += ",\"p_a\":" + std::to_string(cfg.patch_a);
    out += ",\"c_v\":" + std::to_string(cfg.channels_v);
    out += ",\"c_a\":" + std::to_string(cfg.channels_a);
    out += ",\"d\":" + std::to_string(cfg.hidden_dim);
    out += ",\"layers\":" + std::to_string(cfg.layers);
    out += ",\"heads\":" + std::to_string(cfg.heads);
    out += ",\"k\":" + std::to_string(cfg.classes);
    out += ",\"alpha\":";
    append_real(out, cfg.alpha);
    out += ",\"beta\":";
    append_real(out, cfg.beta);
    out += ",\"gamma\":";
    append_real(out, cfg.gamma);
    out += ",\"delta_mode\":";
    out += cfg.delta_mode ? "true" : "false";
    out += ",\"steps\":" + std::to_string(cfg.steps);
    out += ",\"lr\":";
    append_real(out, cfg.lr);
    out += ",\"batch\":" + std::to_string(cfg.batch);
    out += ",\"noise\":";
    append_real(out, cfg.noise);
    out += '}';
}

}  // namespace

std::string render_attention_dump(const RunConfig& cfg, const StackOutput& out) {
    const DgSctHyper hyper{cfg.alpha, cfg.beta, cfg.gamma, cfg.hidden_dim};
    std::string json;
    json.reserve(1 << 16);
    json += "{\"config\":";
    append_config(json, cfg);
    json += ",\"layers\":[";
    for (std::size_t l = 0; l < out.bundles.size(); ++l) {
        const AttentionBundle& b = out.bundles[l];
        if (l) json += ',';
        json += "{\"layer\":" + std::to_string(l);
        json += ",\"m_vc\":";
        append_map2(json, b.m_vc);
        json += ",\"m_ac\":";
        append_map2(json, b.m_ac);
        json += ",\"m_vs\":";
        append_map2(json, b.m_vs);
        json += ",\"m_af\":";
        append_map2(json, b.m_af);
        json += ",\"g_v\":";
        append_gate(json, b.g_v);
        json += ",\"g_a\":";
        append_gate(json, b.g_a);
        json += ",\"factors_v\":";
        append_factors(json, spatial_channel_factors(b.m_vc, b.m_vs, hyper));
        json += ",\"factors_a\":";
        append_factors(json, spatial_channel_factors(b.m_ac, b.m_af, hyper));
        json += '}';
    }
    json += "]}";
    json += '\n';
    return json;
}

std::string run_demo_dump(const RunConfig& cfg) {
    cfg.validate();
    const Model model = make_model(cfg);
    const std::vector<SyntheticPair> pairs = generate_synthetic_pairs(cfg, 1);
    const TokenGrid v = tokens_visual(model, cfg, pairs.front().visual);
    const TokenGrid a = tokens_audio(model, cfg, pairs.front().audio);
    const StackOutput out = stack_forward(v, a, model.stack);
    return render_attention_dump(cfg, out);
}

std::string render_metrics_csv(const std::string& ablation, int steps, double final_loss,
                               double accuracy) {
    std::string csv = "ablation,steps,final_loss,accuracy\n";
    csv += ablation + ',' + std::to_string(steps) + ',';
    append_real(csv, final_loss);
    csv += ',';
    append_real(csv, accuracy);
    csv += '\n';
    return csv;
}

std::string render_params_report(const ParamCounts& counts) {
    char buf[160];
    std::string out;
    std::snprintf(buf, sizeof(buf), "trainable  %10zu  (%.2f%% of total)\n", counts.trainable,
                  counts.trainable_pct());
    out += buf;
    std::snprintf(buf, sizeof(buf), "  psi      %10zu  (%.2f%% of trainable)\n", counts.psi,
                  counts.psi_pct_of_trainable());
    out += buf;
    std::snprintf(buf, sizeof(buf), "  other    %10zu\n", counts.trainable - counts.psi);
    out += buf;
    std::snprintf(buf, sizeof(buf), "frozen     %10zu  (%.2f%% of total)\n", counts.frozen,
                  counts.frozen_pct());
    out += buf;
    std::snprintf(buf, sizeof(buf), "total      %10zu\n", counts.total());
    out += buf;
    return out;
}

std::string render_gradcheck_report(const GradCheckReport& report) {
    std::string out;
    char buf[200];
    for (const auto& entry : report.entries) {
        std::snprintf(buf, sizeof(buf), "%-40s max rel err %.3e\n", entry.name.c_str(),
                      entry.max_rel_err);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "worst %.3e -> %s (threshold 1e-4)\n", report.worst,
                  report.pass ? "PASS" : "FAIL");
    out += buf;
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace dgsct
