// Acceptance suite: runs every acceptance check at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit status is non-zero if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dgsct/attention.hpp"
#include "dgsct/contrastive.hpp"
#include "dgsct/gradcheck.hpp"
#include "dgsct/report.hpp"
#include "dgsct/synthetic.hpp"
#include "dgsct/train.hpp"

using namespace dgsct;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

TokenGrid random_grid(int t, int rows, int cols, int c, Rng& rng, Modality m) {
    const int n = rows * cols;
    std::vector<double> v(static_cast<std::size_t>(t) * n * c);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    TokenGrid g;
    g.tokens = Tensor({t, n, c}, std::move(v));
    g.rows = rows;
    g.cols = cols;
    g.modality = m;
    return g;
}

struct RandomCase {
    TokenGrid v;
    TokenGrid a;
    DgSctParams params;
    bool temporal;
};

RandomCase random_case(Rng& rng, int hidden_dim) {
    const int t = 1 + rng.below(4);
    const int vr = 1 + rng.below(4), vc = 1 + rng.below(4);
    const int ar = 1 + rng.below(4), ac = 1 + rng.below(4);
    const int cv = 1 + rng.below(16), ca = 1 + rng.below(16);
    RandomCase c{random_grid(t, vr, vc, cv, rng, Modality::visual),
                 random_grid(t, ar, ac, ca, rng, Modality::audio),
                 make_dgsct_params(cv, vr * vc, ca, ar * ac, hidden_dim, rng),
                 rng.uniform() < 0.5};
    return c;
}

// ---------- criterion 1 ----------

bool identity_modulation() {
    Rng rng(1001);
    for (int trial = 0; trial < 100; ++trial) {
        RandomCase c = random_case(rng, 1 + rng.below(8));
        const DgSctHyper zero{0.0, 0.0, 0.0, 1};
        const DgSctOutput out = dgsct_forward(c.a, c.v, c.params, zero, c.temporal);
        for (std::size_t i = 0; i < c.v.tokens.numel(); ++i) {
            if (out.v_out.tokens[i] != c.v.tokens[i]) return false;
        }
        for (std::size_t i = 0; i < c.a.tokens.numel(); ++i) {
            if (out.a_out.tokens[i] != c.a.tokens[i]) return false;
        }
    }
    return true;
}

// ---------- criterion 2 ----------

bool bounded_maps_and_factors() {
    Rng rng(2002);
    const DgSctHyper hyper{0.3, 0.05, 0.1, 8};
    for (int trial = 0; trial < 100; ++trial) {
        RandomCase c = random_case(rng, hyper.hidden_dim);
        const DgSctOutput out = dgsct_forward(c.a, c.v, c.params, hyper, c.temporal);
        for (const Tensor* m : {&out.bundle.m_vc, &out.bundle.m_ac, &out.bundle.m_vs,
                                &out.bundle.m_af, &out.bundle.g_v, &out.bundle.g_a}) {
            if (!m->defined()) continue;
            for (std::size_t i = 0; i < m->numel(); ++i) {
                if (!((*m)[i] > 0.0 && (*m)[i] < 1.0)) return false;
            }
        }
        const Tensor fv = spatial_channel_factors(out.bundle.m_vc, out.bundle.m_vs, hyper);
        const Tensor fa = spatial_channel_factors(out.bundle.m_ac, out.bundle.m_af, hyper);
        for (const Tensor* f : {&fv, &fa}) {
            for (std::size_t i = 0; i < f->numel(); ++i) {
                if (!((*f)[i] > 1.0 && (*f)[i] < 1.0 + hyper.alpha + hyper.beta)) return false;
            }
        }
        if (c.temporal) {
            for (const Tensor* g : {&out.bundle.g_v, &out.bundle.g_a}) {
                const Tensor tf = temporal_factors(*g, hyper);
                for (std::size_t i = 0; i < tf.numel(); ++i) {
                    if (!(tf[i] > 1.0 && tf[i] < 1.0 + hyper.gamma)) return false;
                }
            }
        }
    }
    return true;
}

// ---------- criterion 3 ----------

bool gradient_fidelity(double& worst) {
    const GradCheckReport report = grad_check_run(gradcheck_defaults());
    worst = report.worst;
    return report.pass;
}

// ---------- criterion 4 ----------

bool freeze_contract() {
    RunConfig cfg;
    cfg.steps = 200;
    const TrainResult result = train_loop(cfg, Ablation::full);
    // Frozen tensors hash-identical; the trainable side must actually move.
    return result.frozen_hash_before == result.frozen_hash_after &&
           result.trainable_hash_before != result.trainable_hash_after;
}

// ---------- criteria 5 and 6 ----------

struct AblationRow {
    double full, no_s, no_c, no_t, none;
};

bool ablation_direction(std::string& detail, double& elapsed) {
    const auto start = std::chrono::steady_clock::now();
    int passing = 0;
    std::string seeds_passing;
    for (std::uint64_t seed = 41; seed <= 45; ++seed) {
        RunConfig cfg;
        cfg.seed = seed;
        AblationRow row{};
        row.full = train_loop(cfg, Ablation::full).accuracy;
        row.no_s = train_loop(cfg, Ablation::no_s).accuracy;
        row.no_c = train_loop(cfg, Ablation::no_c).accuracy;
        row.no_t = train_loop(cfg, Ablation::no_t).accuracy;
        row.none = train_loop(cfg, Ablation::none).accuracy;
        const bool ordered = row.full >= row.no_s && row.full >= row.no_c && row.full >= row.no_t &&
                             row.no_s >= row.none && row.no_c >= row.none && row.no_t >= row.none;
        const bool gap = row.full - row.none >= 0.10;
        if (ordered && gap) {
            ++passing;
            seeds_passing += " " + std::to_string(seed);
        }
        std::printf(
            "        seed %llu: full=%.4f no_s=%.4f no_c=%.4f no_t=%.4f none=%.4f%s\n",
            static_cast<unsigned long long>(seed), row.full, row.no_s, row.no_c, row.no_t, row.none,
            ordered && gap ? "" : "  <- ordering or gap broken");
    }
    elapsed = seconds_since(start);
    detail = std::to_string(passing) + "/5 seeds ordered (need 4); passing:" + seeds_passing;
    return passing >= 4;
}

bool bidirectionality(std::string& detail) {
    // Single-direction adapters need the gentler, longer schedule to leave
    // their flat region; all four compared variants share it.
    int passing = 0;
    for (std::uint64_t seed = 41; seed <= 45; ++seed) {
        RunConfig cfg;
        cfg.seed = seed;
        cfg.steps = 2400;
        cfg.lr = 0.02;
        const double full = train_loop(cfg, Ablation::full).accuracy;
        const double a2v = train_loop(cfg, Ablation::a2v_only).accuracy;
        const double v2a = train_loop(cfg, Ablation::v2a_only).accuracy;
        const double none = train_loop(cfg, Ablation::none).accuracy;
        const bool ok = a2v > none && v2a > none && full >= a2v && full >= v2a;
        if (ok) ++passing;
        std::printf("        seed %llu: full=%.4f a2v=%.4f v2a=%.4f none=%.4f%s\n",
                    static_cast<unsigned long long>(seed), full, a2v, v2a, none,
                    ok ? "" : "  <- direction ordering broken");
    }
    detail = std::to_string(passing) + "/5 seeds ordered (need 4)";
    return passing >= 4;
}

// ---------- criterion 7 ----------

bool contrastive_closed_forms() {
    // Single pair: the softmax over one element is certainty.
    const Tensor one({1, 2}, {1.0, 0.0});
    if (contrastive_loss(one, one, Tensor::scalar(1.0)).value() != 0.0) return false;

    // Two orthonormal pairs at unit temperature.
    const Tensor eye = Tensor::identity(2);
    const double loss = contrastive_loss(eye, eye, Tensor::scalar(1.0)).value();
    if (std::fabs(loss - 0.313262) > 1e-6) return false;
    if (std::fabs(loss - std::log(1.0 + std::exp(-1.0))) > 1e-12) return false;

    // Convex weights stay exactly on the simplex.
    Rng rng(7007);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> sv(9), sa(9);
        for (auto& x : sv) x = rng.uniform(-3.0, 3.0);
        for (auto& x : sa) x = rng.uniform(-3.0, 3.0);
        const ModalityWeights w =
            modality_weights(Tensor({3, 3}, sv), Tensor({3, 3}, sa));
        if (w.w1.value() + w.w2.value() != 1.0) return false;
    }
    return true;
}

// ---------- criterion 8 ----------

bool permutation_behaviour() {
    Rng rng(8008);
    for (int trial = 0; trial < 100; ++trial) {
        const int t = 1 + rng.below(3);
        const int rows = 1 + rng.below(3), cols = 1 + rng.below(3);
        const int n = rows * cols;
        const int c = 2 + rng.below(6);
        TokenGrid target = random_grid(t, rows, cols, c, rng, Modality::visual);
        DgSctParams params = make_dgsct_params(c, n, c, n, 4, rng);
        Tensor prompt = random_grid(t, rows, cols, c, rng, Modality::audio).tokens;
        prompt = permute_last2(prompt);  // T x C x N

        std::vector<int> perm(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
        for (int i = n - 1; i > 0; --i) {
            std::swap(perm[static_cast<std::size_t>(i)],
                      perm[static_cast<std::size_t>(rng.below(i + 1))]);
        }

        // Channel map: permuting the target tokens must not move it.
        TokenGrid shuffled = target;
        {
            std::vector<double> v(target.tokens.numel());
            for (int tt = 0; tt < t; ++tt) {
                for (int i = 0; i < n; ++i) {
                    for (int ch = 0; ch < c; ++ch) {
                        v[(static_cast<std::size_t>(tt) * n + i) * c + ch] =
                            target.tokens.at({tt, perm[static_cast<std::size_t>(i)], ch});
                    }
                }
            }
            shuffled.tokens = Tensor({t, n, c}, std::move(v));
        }
        const Tensor base_c = channel_attention(prompt, target, params.a2v.channel);
        const Tensor perm_c = channel_attention(prompt, shuffled, params.a2v.channel);
        for (std::size_t i = 0; i < base_c.numel(); ++i) {
            if (std::fabs(base_c[i] - perm_c[i]) > 1e-12) return false;
        }

        // Spatial map: joint permutation moves the map by the same permutation.
        auto permute_cn = [&](const Tensor& x) {
            std::vector<double> v(x.numel());
            for (int tt = 0; tt < t; ++tt) {
                for (int ch = 0; ch < c; ++ch) {
                    for (int i = 0; i < n; ++i) {
                        v[(static_cast<std::size_t>(tt) * c + ch) * n + i] =
                            x.at({tt, ch, perm[static_cast<std::size_t>(i)]});
                    }
                }
            }
            return Tensor({t, c, n}, std::move(v));
        };
        const Tensor target_cn = permute_last2(target.tokens);
        const Tensor base_s = spatial_attention(prompt, target_cn, params.a2v.spatial);
        const Tensor perm_s =
            spatial_attention(permute_cn(prompt), permute_cn(target_cn), params.a2v.spatial);
        for (int tt = 0; tt < t; ++tt) {
            for (int i = 0; i < n; ++i) {
                const double expected = base_s.at({tt, 0, perm[static_cast<std::size_t>(i)]});
                if (std::fabs(perm_s.at({tt, 0, i}) - expected) > 1e-12) return false;
            }
        }
    }
    return true;
}

// ---------- criterion 9 ----------

bool determinism() {
    RunConfig cfg;
    const std::string demo_a = run_demo_dump(cfg);
    const std::string demo_b = run_demo_dump(cfg);
    write_text_file("/tmp/dgsct_accept_demo_a.json", demo_a);
    write_text_file("/tmp/dgsct_accept_demo_b.json", demo_b);
    if (demo_a != demo_b) return false;

    RunConfig short_cfg;
    short_cfg.steps = 120;
    const TrainResult r1 = train_loop(short_cfg, Ablation::full);
    const TrainResult r2 = train_loop(short_cfg, Ablation::full);
    const std::string csv_a =
        render_metrics_csv("full", short_cfg.steps, r1.final_loss, r1.accuracy);
    const std::string csv_b =
        render_metrics_csv("full", short_cfg.steps, r2.final_loss, r2.accuracy);
    write_text_file("/tmp/dgsct_accept_train_a.csv", csv_a);
    write_text_file("/tmp/dgsct_accept_train_b.csv", csv_b);
    return csv_a == csv_b && r1.epoch_losses == r2.epoch_losses;
}

// ---------- criterion 10 ----------

std::size_t direction_params(int c_src, int n_src, int c_tgt, int n_tgt, int d) {
    const std::size_t bottleneck = static_cast<std::size_t>((c_tgt + 3) / 4);
    std::size_t count = 0;
    count += static_cast<std::size_t>(c_tgt) * c_src * 9;
    count += static_cast<std::size_t>(n_src) * n_tgt;
    count += 2u * static_cast<std::size_t>(c_tgt) * c_tgt;
    count += bottleneck * c_tgt + bottleneck;
    count += static_cast<std::size_t>(c_tgt) * bottleneck + c_tgt;
    count += 2u * static_cast<std::size_t>(d) * c_tgt + d;
    count += 2u * static_cast<std::size_t>(c_src) * c_src + c_src;
    count += static_cast<std::size_t>(c_src);
    return count;
}

bool parameter_accounting() {
    RunConfig desk;
    RunConfig small = gradcheck_defaults();
    RunConfig uneven;
    uneven.channels_v = 8;
    uneven.channels_a = 4;
    uneven.hidden_dim = 6;
    uneven.layers = 1;
    uneven.classes = 3;
    for (const RunConfig& cfg : {desk, small, uneven}) {
        const ParamCounts counts = count_params(cfg);
        const std::size_t psi_expected =
            static_cast<std::size_t>(cfg.layers) *
            (9u * static_cast<std::size_t>(cfg.channels_v) * cfg.channels_a * 2u +
             2u * static_cast<std::size_t>(cfg.visual_tokens()) * cfg.audio_tokens());
        const std::size_t trainable_expected =
            static_cast<std::size_t>(cfg.layers) *
                (direction_params(cfg.channels_a, cfg.audio_tokens(), cfg.channels_v,
                                  cfg.visual_tokens(), cfg.hidden_dim) +
                 direction_params(cfg.channels_v, cfg.visual_tokens(), cfg.channels_a,
                                  cfg.audio_tokens(), cfg.hidden_dim)) +
            static_cast<std::size_t>(cfg.channels_v + cfg.channels_a) * cfg.classes + cfg.classes;
        auto encoder = [](int c) {
            return 4u * static_cast<std::size_t>(c) * c + static_cast<std::size_t>(c) * 2 * c +
                   2u * static_cast<std::size_t>(c) + 2u * static_cast<std::size_t>(c) * c +
                   static_cast<std::size_t>(c);
        };
        const std::size_t frozen_expected =
            static_cast<std::size_t>(cfg.patch_v * cfg.patch_v * 3) * cfg.channels_v +
            static_cast<std::size_t>(cfg.patch_a * cfg.patch_a) * cfg.channels_a +
            static_cast<std::size_t>(cfg.layers) *
                (encoder(cfg.channels_v) + encoder(cfg.channels_a));
        if (counts.psi != psi_expected) return false;
        if (counts.trainable != trainable_expected) return false;
        if (counts.frozen != frozen_expected) return false;
    }
    return true;
}

struct Criterion {
    int number;
    const char* label;
    bool pass;
    double seconds;
    std::string detail;
};

}  // namespace

int main() {
    std::vector<Criterion> results;
    auto timed = [&](int number, const char* label, auto&& fn, double budget,
                     std::string detail = "") {
        const auto start = std::chrono::steady_clock::now();
        const bool ok = fn();
        const double secs = seconds_since(start);
        const bool in_budget = budget <= 0.0 || secs < budget;
        results.push_back({number, label, ok && in_budget, secs, detail});
        if (!in_budget) results.back().detail += " (runtime budget exceeded)";
    };

    timed(1, "identity modulation at zero weights, 100 random configurations",
          identity_modulation, 10.0);
    timed(2, "attention maps and modulation factors stay inside their open bounds",
          bounded_maps_and_factors, 10.0);

    {
        const auto start = std::chrono::steady_clock::now();
        double worst = 0.0;
        const bool ok = gradient_fidelity(worst);
        const double secs = seconds_since(start);
        results.push_back({3, "finite differences confirm every trainable gradient (tol 1e-4)",
                           ok && secs < 60.0, secs, "worst rel err " + std::to_string(worst)});
    }

    timed(4, "frozen encoder hashes unchanged by 200 training steps", freeze_contract, 60.0);

    {
        std::string detail;
        double secs = 0.0;
        const bool ok = ablation_direction(detail, secs);
        results.push_back(
            {5, "ablation ordering full >= single-module >= none with a 10-point gap",
             ok && secs < 300.0, secs, detail});
    }

    {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        const bool ok = bidirectionality(detail);
        results.push_back({6, "each single direction beats none and full beats each",
                           ok, seconds_since(start), detail});
    }

    timed(7, "contrastive closed forms and exact convex weights", contrastive_closed_forms, 0.0);
    timed(8, "channel-map invariance and spatial-map equivariance under permutations",
          permutation_behaviour, 0.0);
    timed(9, "demo and train outputs are byte-identical across reruns", determinism, 0.0);
    timed(10, "parameter counts match the closed form on three configs", parameter_accounting, 0.0);

    bool all = true;
    for (const Criterion& c : results) {
        std::printf("%s  criterion %2d: %s  [%.1fs]%s%s\n", c.pass ? "PASS" : "FAIL", c.number,
                    c.label, c.seconds, c.detail.empty() ? "" : "  -- ", c.detail.c_str());
        all = all && c.pass;
    }
    std::printf("%s\n", all ? "acceptance: all criteria pass" : "acceptance: FAILURES present");
    return all ? 0 : 1;
}
