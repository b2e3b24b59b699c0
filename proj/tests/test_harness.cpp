#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "dgsct/report.hpp"
#include "dgsct/synthetic.hpp"
#include "dgsct/train.hpp"

using namespace dgsct;

namespace {

std::string temp_path(const std::string& name) { return "/tmp/dgsct_test_" + name; }

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DGSCT_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

// Closed-form parameter count of one guidance direction.
std::size_t direction_params(int c_src, int n_src, int c_tgt, int n_tgt, int d) {
    const std::size_t bottleneck = static_cast<std::size_t>((c_tgt + 3) / 4);
    std::size_t count = 0;
    count += static_cast<std::size_t>(c_tgt) * c_src * 9;        // psi conv
    count += static_cast<std::size_t>(n_src) * n_tgt;            // psi token map
    count += 2u * static_cast<std::size_t>(c_tgt) * c_tgt;       // channel thetas
    count += bottleneck * c_tgt + bottleneck;                    // phi_w1 + phi_b1
    count += static_cast<std::size_t>(c_tgt) * bottleneck + c_tgt;  // phi_w2 + phi_b2
    count += 2u * static_cast<std::size_t>(d) * c_tgt + d;       // spatial thetas + head
    count += 2u * static_cast<std::size_t>(c_src) * c_src + c_src;  // rnn
    count += static_cast<std::size_t>(c_src);                    // gate head
    return count;
}

std::size_t expected_trainable(const RunConfig& cfg) {
    const std::size_t per_layer =
        direction_params(cfg.channels_a, cfg.audio_tokens(), cfg.channels_v, cfg.visual_tokens(),
                         cfg.hidden_dim) +
        direction_params(cfg.channels_v, cfg.visual_tokens(), cfg.channels_a, cfg.audio_tokens(),
                         cfg.hidden_dim);
    const std::size_t head =
        static_cast<std::size_t>(cfg.channels_v + cfg.channels_a) * cfg.classes + cfg.classes;
    return per_layer * static_cast<std::size_t>(cfg.layers) + head;
}

std::size_t expected_frozen(const RunConfig& cfg) {
    auto encoder = [](int c) {
        return 4u * static_cast<std::size_t>(c) * c +                       // mha projections
               static_cast<std::size_t>(c) * 2 * c + 2 * static_cast<std::size_t>(c) +  // mlp in
               2u * static_cast<std::size_t>(c) * c + static_cast<std::size_t>(c);      // mlp out
    };
    std::size_t count = 0;
    count += static_cast<std::size_t>(cfg.patch_v * cfg.patch_v * 3) * cfg.channels_v;
    count += static_cast<std::size_t>(cfg.patch_a * cfg.patch_a) * cfg.channels_a;
    count += static_cast<std::size_t>(cfg.layers) * (encoder(cfg.channels_v) + encoder(cfg.channels_a));
    return count;
}

}  // namespace

TEST_SUITE("cli-harness") {

TEST_CASE("config files override defaults and flags win") {
    const std::string path = temp_path("cfg.conf");
    write_file(path, "seed = 9\nalpha = 0.5\n# comment line\nsteps = 17\n");
    RunConfig cfg = load_config_file(path, RunConfig{});
    CHECK(cfg.seed == 9);
    CHECK(cfg.alpha == 0.5);
    CHECK(cfg.steps == 17);
    CHECK(cfg.beta == RunConfig{}.beta);  // untouched keys keep defaults

    apply_config_entry(cfg, "beta", "0.2");
    CHECK(cfg.beta == 0.2);
    CHECK_THROWS_AS(apply_config_entry(cfg, "bogus", "1"), InvalidConfig);
    CHECK_THROWS_AS(apply_config_entry(cfg, "steps", "abc"), InvalidConfig);
    CHECK_THROWS_AS(load_config_file(temp_path("missing.conf"), RunConfig{}), IoError);

    const std::string bad = temp_path("bad.conf");
    write_file(bad, "no equals sign here\n");
    CHECK_THROWS_AS(load_config_file(bad, RunConfig{}), InvalidConfig);
}

TEST_CASE("config validation rejects broken extents") {
    RunConfig cfg;
    cfg.height = 15;  // not divisible by patch 4
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = RunConfig{};
    cfg.heads = 3;  // 16 % 3 != 0
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = RunConfig{};
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = RunConfig{};
    cfg.classes = 1;
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    CHECK_NOTHROW(RunConfig{}.validate());
    CHECK_NOTHROW(gradcheck_defaults().validate());
}

TEST_CASE("generation is deterministic and respects the labels contract") {
    RunConfig cfg;
    const auto first = generate_synthetic_pairs(cfg, 6);
    const auto second = generate_synthetic_pairs(cfg, 6);
    REQUIRE(first.size() == 6);
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].visual.frames.data() == second[i].visual.frames.data());
        CHECK(first[i].audio.mel.data() == second[i].audio.mel.data());
        CHECK(first[i].labels == second[i].labels);
        REQUIRE(first[i].labels.size() == static_cast<std::size_t>(cfg.timesteps));
        for (int t = 0; t < cfg.timesteps; ++t) {
            const int label = first[i].labels[static_cast<std::size_t>(t)];
            if (first[i].event_mask[static_cast<std::size_t>(t)]) {
                CHECK(label == first[i].event_class);
            } else {
                CHECK(label == cfg.classes - 1);
            }
        }
    }
    CHECK(generate_synthetic_pairs(cfg, 0).empty());
}

TEST_CASE("with zero noise, events differ from background exactly by the pattern") {
    RunConfig cfg;
    cfg.classes = 2;  // one event class
    cfg.noise = 0.0;
    const auto pairs = generate_synthetic_pairs(cfg, 3);
    for (const auto& pair : pairs) {
        // Background timesteps are exactly zero; event timesteps hold the
        // pattern: a block of frame pixels and one mel band at the amplitude.
        for (int t = 0; t < cfg.timesteps; ++t) {
            double frame_sum = 0.0;
            for (int y = 0; y < cfg.height; ++y) {
                for (int x = 0; x < cfg.width; ++x) {
                    for (int d = 0; d < 3; ++d) frame_sum += pair.visual.frames.at({t, y, x, d});
                }
            }
            double mel_sum = 0.0;
            for (int l = 0; l < cfg.mel_bins; ++l) {
                for (int f = 0; f < cfg.freq_bins; ++f) mel_sum += pair.audio.mel.at({t, l, f});
            }
            if (pair.event_mask[static_cast<std::size_t>(t)]) {
                const double block = visual_block_rows(cfg) * cfg.patch_v *
                                     visual_block_cols(cfg) * cfg.patch_v * 3.0;
                CHECK(frame_sum == doctest::Approx(block * kPatternAmplitude).epsilon(1e-12));
                CHECK(mel_sum == doctest::Approx(cfg.mel_bins * cfg.patch_a * kPatternAmplitude)
                                     .epsilon(1e-12));
            } else {
                CHECK(frame_sum == 0.0);
                CHECK(mel_sum == 0.0);
            }
        }
    }
}

TEST_CASE("classes plant patterns at distinct positions") {
    RunConfig cfg;
    std::vector<int> cells, bands;
    for (int k = 0; k < cfg.classes - 1; ++k) {
        cells.push_back(visual_pattern_cell(cfg, k));
        bands.push_back(audio_pattern_band(cfg, k));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (std::size_t j = i + 1; j < cells.size(); ++j) {
            CHECK(cells[i] != cells[j]);
            CHECK(bands[i] != bands[j]);
        }
    }
}

TEST_CASE("cross entropy matches the log-softmax oracle") {
    // Uniform logits: loss is log K for any labels.
    const Tensor logits = Tensor::zeros({3, 4});
    CHECK(cross_entropy(logits, {0, 1, 2}).value() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // Hand oracle on one row.
    const Tensor one({1, 3}, {2.0, -1.0, 0.5});
    const double denom = std::exp(2.0) + std::exp(-1.0) + std::exp(0.5);
    const double expected = -(0.5 - std::log(denom));
    CHECK(cross_entropy(one, {2}).value() == doctest::Approx(expected).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy(one, {3}), ShapeMismatch);
    CHECK_THROWS_AS(cross_entropy(one, {0, 1}), ShapeMismatch);
}

TEST_CASE("training at the default step count decreases the loss and freezes the encoders") {
    // The zero-started head opens at log K while the adapters pass through a
    // warm-up transient, so the drop below the opening loss shows up at the
    // default step count rather than at early cuts.
    RunConfig cfg;
    const TrainResult result = train_loop(cfg, Ablation::full);
    CHECK(result.final_loss < result.initial_loss);
    CHECK(std::isfinite(result.final_loss));
    CHECK(result.frozen_hash_before == result.frozen_hash_after);
    CHECK(!result.epoch_losses.empty());
    CHECK(result.accuracy > 0.0);
    CHECK(result.accuracy <= 1.0);
}

TEST_CASE("ablation names round-trip and unknown names are rejected") {
    for (Ablation ab : {Ablation::full, Ablation::no_s, Ablation::no_c, Ablation::no_t,
                        Ablation::a2v_only, Ablation::v2a_only, Ablation::none}) {
        CHECK(parse_ablation(ablation_name(ab)) == ab);
    }
    CHECK_THROWS_AS(parse_ablation("everything"), InvalidConfig);
}

TEST_CASE("parameter counts match the closed form on three configs") {
    RunConfig desk;  // default desk scale
    RunConfig small = gradcheck_defaults();
    RunConfig uneven;
    uneven.channels_v = 8;
    uneven.channels_a = 4;
    uneven.heads = 2;
    uneven.hidden_dim = 6;
    uneven.layers = 3;
    uneven.classes = 3;
    for (const RunConfig& cfg : {desk, small, uneven}) {
        const ParamCounts counts = count_params(cfg);
        CHECK(counts.trainable == expected_trainable(cfg));
        CHECK(counts.frozen == expected_frozen(cfg));
        CHECK(counts.trainable_pct() + counts.frozen_pct() == doctest::Approx(100.0).epsilon(1e-9));
    }
}

TEST_CASE("zero layers leave only the head trainable") {
    RunConfig cfg;
    cfg.layers = 0;
    const ParamCounts counts = count_params(cfg);
    CHECK(counts.trainable ==
          static_cast<std::size_t>(cfg.channels_v + cfg.channels_a) * cfg.classes + cfg.classes);
    CHECK(counts.psi == 0);
}

TEST_CASE("doubling the visual channels scales the prompt conv as predicted") {
    RunConfig narrow_cfg;
    RunConfig wide_cfg;
    wide_cfg.channels_v = 2 * narrow_cfg.channels_v;
    const ParamCounts narrow_counts = count_params(narrow_cfg);
    const ParamCounts wide_counts = count_params(wide_cfg);
    // Closed form: psi holds conv C_tgt*C_src*9 per direction plus token maps.
    const std::size_t narrow_psi =
        9u * (static_cast<std::size_t>(narrow_cfg.channels_v) * narrow_cfg.channels_a * 2) +
        2u * static_cast<std::size_t>(narrow_cfg.visual_tokens()) * narrow_cfg.audio_tokens();
    const std::size_t wide_psi =
        9u * (static_cast<std::size_t>(wide_cfg.channels_v) * wide_cfg.channels_a * 2) +
        2u * static_cast<std::size_t>(wide_cfg.visual_tokens()) * wide_cfg.audio_tokens();
    CHECK(narrow_counts.psi == static_cast<std::size_t>(narrow_cfg.layers) * narrow_psi);
    CHECK(wide_counts.psi == static_cast<std::size_t>(wide_cfg.layers) * wide_psi);
}

TEST_CASE("attention dump follows the schema and is reproducible") {
    RunConfig cfg;
    const std::string dump = run_demo_dump(cfg);
    CHECK(dump == run_demo_dump(cfg));  // byte-identical rerun

    const nlohmann::json parsed = nlohmann::json::parse(dump);
    REQUIRE(parsed.contains("config"));
    REQUIRE(parsed.contains("layers"));
    REQUIRE(parsed["layers"].size() == static_cast<std::size_t>(cfg.layers));
    for (std::size_t l = 0; l < parsed["layers"].size(); ++l) {
        const auto& layer = parsed["layers"][l];
        CHECK(layer["layer"] == static_cast<int>(l));
        for (const char* key : {"m_vc", "m_ac", "m_vs", "m_af"}) {
            REQUIRE(layer.contains(key));
            const auto& rows = layer[key];
            REQUIRE(rows.size() == static_cast<std::size_t>(cfg.timesteps));
            for (const auto& row : rows) {
                for (const auto& value : row) {
                    const double v = value.get<double>();
                    CHECK(v > 0.0);
                    CHECK(v < 1.0);
                }
            }
        }
        const bool last = l + 1 == parsed["layers"].size();
        CHECK(layer["g_v"].is_null() == !last);
        CHECK(layer["g_a"].is_null() == !last);
        if (last) {
            REQUIRE(layer["g_v"].size() == static_cast<std::size_t>(cfg.timesteps));
            for (const auto& value : layer["g_v"]) {
                CHECK(value.get<double>() > 0.0);
                CHECK(value.get<double>() < 1.0);
            }
        }
        // Per-token factors sit strictly inside (1, 1 + alpha + beta).
        for (const char* key : {"factors_v", "factors_a"}) {
            REQUIRE(layer.contains(key));
            for (const auto& plane : layer[key]) {
                for (const auto& row : plane) {
                    for (const auto& value : row) {
                        const double v = value.get<double>();
                        CHECK(v > 1.0);
                        CHECK(v < 1.0 + cfg.alpha + cfg.beta);
                    }
                }
            }
        }
    }
    CHECK(parsed["config"]["seed"] == cfg.seed);
    CHECK(parsed["config"]["k"] == cfg.classes);
}

TEST_CASE("metrics CSV uses the exact header and LF endings") {
    const std::string csv = render_metrics_csv("full", 120, 0.25, 0.875);
    CHECK(csv.rfind("ablation,steps,final_loss,accuracy\n", 0) == 0);
    CHECK(csv.find('\r') == std::string::npos);
    CHECK(csv.find("full,120,0.25,0.875") != std::string::npos);
    CHECK(csv.back() == '\n');
}

TEST_CASE("grad check passes on the probe config and trips on corruption") {
    const RunConfig cfg = gradcheck_defaults();
    const GradCheckReport good = grad_check_run(cfg);
    CHECK(good.pass);
    CHECK(good.worst < 1e-4);
    // One line per checked tensor: DG-SCT params, head, contrastive params.
    CHECK(good.entries.size() == 2u * 30u + 2u + 18u);

    const GradCheckReport bad = grad_check_run(cfg, /*corrupt_gradient=*/true);
    CHECK(!bad.pass);
}

TEST_CASE("grad check rejects oversized configs") {
    RunConfig cfg = gradcheck_defaults();
    cfg.channels_v = 64;
    cfg.channels_a = 64;
    cfg.height = 64;
    cfg.width = 64;
    cfg.mel_bins = 64;
    cfg.freq_bins = 64;
    CHECK_THROWS_AS(grad_check_run(cfg), InvalidConfig);
}

TEST_CASE("cli exit codes follow the contract") {
    const std::string out = temp_path("cli_demo.json");
    CHECK(run_cli("demo --out " + out) == 0);
    CHECK(run_cli("demo --seed 5 --out " + out) == 0);

    // Invalid config: indivisible extents via config file.
    const std::string bad = temp_path("cli_bad.conf");
    write_file(bad, "h = 15\n");
    CHECK(run_cli("demo --config " + bad + " --out " + out) == 1);
    CHECK(run_cli("train --ablation bogus --out " + out) == 1);

    // Numerical failure: corrupted gradient hook.
    CHECK(run_cli("gradcheck --corrupt-gradient") == 2);
    CHECK(run_cli("gradcheck") == 0);

    // I/O error: unwritable output path.
    CHECK(run_cli("demo --out /nonexistent_dir/x.json") == 3);
}

TEST_CASE("cli flags override the config file") {
    const std::string conf = temp_path("cli_override.conf");
    write_file(conf, "seed = 11\n");
    const std::string out_a = temp_path("cli_a.json");
    const std::string out_b = temp_path("cli_b.json");
    const std::string out_c = temp_path("cli_c.json");
    REQUIRE(run_cli("demo --config " + conf + " --out " + out_a) == 0);
    REQUIRE(run_cli("demo --config " + conf + " --seed 12 --out " + out_b) == 0);
    REQUIRE(run_cli("demo --seed 11 --out " + out_c) == 0);
    const std::string a = read_file(out_a);
    CHECK(a != read_file(out_b));  // flag overrode the file seed
    CHECK(a == read_file(out_c));  // file seed equals explicit flag
}

}  // TEST_SUITE
