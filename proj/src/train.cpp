#include "dgsct/train.hpp"

#include <cmath>
#include <cstring>

#include "dgsct/gradcheck.hpp"

namespace dgsct {

namespace {

// Stream tags keeping model, data and text randomness disjoint.
constexpr std::uint64_t kModelStream = 0x6d6f64656cull;
constexpr std::uint64_t kContrastiveStream = 0x636f6e7472ull;
constexpr std::uint64_t kTextStream = 0x74657874ull;

}  // namespace

Model make_model(const RunConfig& cfg) {
    cfg.validate();
    Rng rng = Rng::for_stream(cfg.seed, kModelStream);
    Model m;
    // The embeddings set the activation scale of the whole normalization-free
    // stack; a 1/fan bound keeps later attention logits in the responsive
    // range of their sigmoids.
    const int raw_v = cfg.patch_v * cfg.patch_v * 3;
    const int raw_a = cfg.patch_a * cfg.patch_a;
    m.visual_embed = Tensor::uniform_range({raw_v, cfg.channels_v}, 1.5 / raw_v, rng, false);
    m.audio_embed = Tensor::uniform_range({raw_a, cfg.channels_a}, 1.5 / raw_a, rng, false);
    for (int l = 0; l < cfg.layers; ++l) {
        m.stack.visual_layers.push_back(make_frozen_layer(cfg.channels_v, cfg.heads, rng));
        m.stack.audio_layers.push_back(make_frozen_layer(cfg.channels_a, cfg.heads, rng));
        m.stack.dgsct_per_layer.push_back(make_dgsct_params(
            cfg.channels_v, cfg.visual_tokens(), cfg.channels_a, cfg.audio_tokens(),
            cfg.hidden_dim, rng));
    }
    m.stack.hyper = DgSctHyper{cfg.alpha, cfg.beta, cfg.gamma, cfg.hidden_dim};
    m.stack.delta_mode = cfg.delta_mode;
    m.stack.head = make_head(cfg.channels_v + cfg.channels_a, cfg.classes, rng);
    return m;
}

TokenGrid tokens_visual(const Model& model, const RunConfig& cfg, const RawVisualClip& clip) {
    return patchify_visual(clip, cfg.patch_v, model.visual_embed);
}

TokenGrid tokens_audio(const Model& model, const RunConfig& cfg, const RawAudioClip& clip) {
    return patchify_audio(clip, cfg.patch_a, model.audio_embed);
}

Tensor model_logits(const Model& model, const RunConfig& cfg, const SyntheticPair& pair) {
    const TokenGrid v = tokens_visual(model, cfg, pair.visual);
    const TokenGrid a = tokens_audio(model, cfg, pair.audio);
    const StackOutput out = stack_forward(v, a, model.stack);
    return classify(out.v_feat, out.a_feat, model.stack.head);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeMismatch("cross_entropy: logits must be T x K");
    const int t_len = logits.shape()[0];
    const int k = logits.shape()[1];
    if (static_cast<int>(labels.size()) != t_len) {
        throw ShapeMismatch("cross_entropy: label count does not match the timestep count");
    }
    std::vector<double> onehot(static_cast<std::size_t>(t_len) * k, 0.0);
    for (int t = 0; t < t_len; ++t) {
        const int label = labels[static_cast<std::size_t>(t)];
        if (label < 0 || label >= k) throw ShapeMismatch("cross_entropy: label out of range");
        onehot[static_cast<std::size_t>(t) * k + label] = 1.0;
    }
    Tensor mask({t_len, k}, std::move(onehot));
    Tensor picked = hadamard(log_softmax_axis(logits, 1), mask);
    return scale(reduce_sum_all(picked), -1.0 / static_cast<double>(t_len));
}

Ablation parse_ablation(const std::string& name) {
    if (name == "full") return Ablation::full;
    if (name == "no_s") return Ablation::no_s;
    if (name == "no_c") return Ablation::no_c;
    if (name == "no_t") return Ablation::no_t;
    if (name == "a2v_only") return Ablation::a2v_only;
    if (name == "v2a_only") return Ablation::v2a_only;
    if (name == "none") return Ablation::none;
    throw InvalidConfig("unknown ablation '" + name +
                        "' (expected full|no_s|no_c|no_t|a2v_only|v2a_only|none)");
}

const char* ablation_name(Ablation ablation) {
    switch (ablation) {
        case Ablation::full: return "full";
        case Ablation::no_s: return "no_s";
        case Ablation::no_c: return "no_c";
        case Ablation::no_t: return "no_t";
        case Ablation::a2v_only: return "a2v_only";
        case Ablation::v2a_only: return "v2a_only";
        case Ablation::none: return "none";
    }
    return "?";
}

void apply_ablation(DualEncoderStack& stack, Ablation ablation) {
    switch (ablation) {
        case Ablation::full: break;
        case Ablation::no_s: stack.hyper.beta = 0.0; break;
        case Ablation::no_c: stack.hyper.alpha = 0.0; break;
        case Ablation::no_t: stack.hyper.gamma = 0.0; break;
        case Ablation::a2v_only: stack.mask.v2a = false; break;
        case Ablation::v2a_only: stack.mask.a2v = false; break;
        case Ablation::none:
            stack.mask.a2v = false;
            stack.mask.v2a = false;
            break;
    }
}

namespace {

struct TokenPair {
    TokenGrid v;
    TokenGrid a;
};

// Tokens depend only on the frozen embeddings and the raw clips, so one
// tokenization per dataset serves every step and evaluation.
std::vector<TokenPair> tokenize_all(const Model& model, const RunConfig& cfg,
                                    const std::vector<SyntheticPair>& clips) {
    std::vector<TokenPair> out;
    out.reserve(clips.size());
    for (const SyntheticPair& pair : clips) {
        out.push_back({tokens_visual(model, cfg, pair.visual), tokens_audio(model, cfg, pair.audio)});
    }
    return out;
}

Tensor logits_from_tokens(const Model& model, const TokenPair& tokens) {
    const StackOutput out = stack_forward(tokens.v, tokens.a, model.stack);
    return classify(out.v_feat, out.a_feat, model.stack.head);
}

}  // namespace

double evaluate_accuracy(const Model& model, const RunConfig& cfg,
                         const std::vector<SyntheticPair>& clips) {
    std::size_t correct = 0;
    std::size_t total = 0;
    const std::vector<TokenPair> tokens = tokenize_all(model, cfg, clips);
    for (std::size_t ci = 0; ci < clips.size(); ++ci) {
        const SyntheticPair& pair = clips[ci];
        const Tensor logits = logits_from_tokens(model, tokens[ci]);
        const int k = logits.shape()[1];
        for (int t = 0; t < cfg.timesteps; ++t) {
            int best = 0;
            for (int j = 1; j < k; ++j) {
                if (logits.at({t, j}) > logits.at({t, best})) best = j;
            }
            if (best == pair.labels[static_cast<std::size_t>(t)]) ++correct;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

std::uint64_t hash_tensor_bytes(const Tensor& t) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t bits) {
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffull;
            h *= 1099511628211ull;
        }
    };
    for (int e : t.shape()) mix(static_cast<std::uint64_t>(e));
    for (double v : t.data()) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof(bits));
        mix(bits);
    }
    return h;
}

std::uint64_t frozen_hash(const Model& model) {
    std::uint64_t h = 1469598103934665603ull;
    auto fold = [&h](const Tensor& t) { h = h * 1099511628211ull + hash_tensor_bytes(t); };
    fold(model.visual_embed);
    fold(model.audio_embed);
    for (const auto& layer : model.stack.visual_layers) {
        for (const Tensor* t : layer.tensors()) fold(*t);
    }
    for (const auto& layer : model.stack.audio_layers) {
        for (const Tensor* t : layer.tensors()) fold(*t);
    }
    return h;
}

TrainResult train_loop(const RunConfig& cfg, Ablation ablation) {
    cfg.validate();
    Model model = make_model(cfg);
    apply_ablation(model.stack, ablation);

    const std::vector<SyntheticPair> all =
        generate_synthetic_pairs(cfg, kTrainClips + kEvalClips);
    const std::vector<SyntheticPair> train(all.begin(), all.begin() + kTrainClips);
    const std::vector<SyntheticPair> eval_clips(all.begin() + kTrainClips, all.end());
    const std::vector<TokenPair> train_tokens = tokenize_all(model, cfg, train);

    auto trainable_hash = [&model]() {
        std::uint64_t h = 1469598103934665603ull;
        for (auto& [name, tensor] : model.stack.trainable_tensors()) {
            h = h * 1099511628211ull + hash_tensor_bytes(*tensor);
        }
        return h;
    };

    TrainResult result;
    result.frozen_hash_before = frozen_hash(model);
    result.trainable_hash_before = trainable_hash();

    const int epoch_steps = std::max(1, kTrainClips / cfg.batch);
    double epoch_acc = 0.0;
    int epoch_count = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        double step_loss = 0.0;
        try {
            Tape tape;
            Tensor batch_loss;
            for (int j = 0; j < cfg.batch; ++j) {
                const std::size_t idx = static_cast<std::size_t>((step * cfg.batch + j) % kTrainClips);
                Tensor loss =
                    cross_entropy(logits_from_tokens(model, train_tokens[idx]), train[idx].labels);
                batch_loss = j == 0 ? loss : add(batch_loss, loss);
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(cfg.batch));
            step_loss = batch_loss.value();
            if (!std::isfinite(step_loss)) {
                throw DivergenceDetected("training loss is not finite at step " +
                                         std::to_string(step));
            }
            GradientMap grads = tape.backward(batch_loss);
            for (auto& [name, tensor] : model.stack.trainable_tensors()) {
                if (!grads.contains(*tensor)) continue;  // unused under this ablation
                const Tensor& g = grads.at(*tensor);
                std::vector<double> updated = tensor->data();
                for (std::size_t i = 0; i < updated.size(); ++i) updated[i] -= cfg.lr * g[i];
                *tensor = Tensor(tensor->shape(), std::move(updated), true);
            }
        } catch (const NonFiniteInput& e) {
            throw DivergenceDetected(std::string("training diverged: ") + e.what());
        }

        if (step == 0) result.initial_loss = step_loss;
        result.final_loss = step_loss;
        epoch_acc += step_loss;
        ++epoch_count;
        if (epoch_count == epoch_steps || step == cfg.steps - 1) {
            result.epoch_losses.push_back(epoch_acc / epoch_count);
            epoch_acc = 0.0;
            epoch_count = 0;
        }
    }

    result.frozen_hash_after = frozen_hash(model);
    result.trainable_hash_after = trainable_hash();
    result.accuracy = evaluate_accuracy(model, cfg, eval_clips);
    return result;
}

double ParamCounts::trainable_pct() const {
    return total() == 0 ? 0.0 : 100.0 * static_cast<double>(trainable) / static_cast<double>(total());
}

double ParamCounts::frozen_pct() const {
    return total() == 0 ? 0.0 : 100.0 * static_cast<double>(frozen) / static_cast<double>(total());
}

double ParamCounts::psi_pct_of_trainable() const {
    return trainable == 0 ? 0.0
                          : 100.0 * static_cast<double>(psi) / static_cast<double>(trainable);
}

ParamCounts count_params(const RunConfig& cfg) {
    Model model = make_model(cfg);
    ParamCounts counts;
    for (auto& [name, tensor] : model.stack.trainable_tensors()) {
        counts.trainable += tensor->numel();
        if (name.find(".psi.") != std::string::npos) counts.psi += tensor->numel();
    }
    counts.frozen += model.visual_embed.numel();
    counts.frozen += model.audio_embed.numel();
    for (const auto& layer : model.stack.visual_layers) {
        for (const Tensor* t : layer.tensors()) counts.frozen += t->numel();
    }
    for (const auto& layer : model.stack.audio_layers) {
        for (const Tensor* t : layer.tensors()) counts.frozen += t->numel();
    }
    return counts;
}

GradCheckReport grad_check_run(const RunConfig& cfg, bool corrupt_gradient) {
    cfg.validate();
    const std::size_t cap = 10000;
    const std::size_t v_activation = static_cast<std::size_t>(cfg.timesteps) *
                                     cfg.visual_tokens() * cfg.channels_v;
    const std::size_t a_activation = static_cast<std::size_t>(cfg.timesteps) *
                                     cfg.audio_tokens() * cfg.channels_a;
    if (v_activation > cap || a_activation > cap) {
        throw InvalidConfig("grad check config too large: activation sizes must stay at or below 1e4");
    }

    Model model = make_model(cfg);
    for (auto& [name, tensor] : model.stack.trainable_tensors()) {
        if (tensor->numel() > cap) {
            throw InvalidConfig("grad check config too large: tensor " + name + " exceeds 1e4 elements");
        }
    }
    const std::vector<SyntheticPair> pairs = generate_synthetic_pairs(cfg, 1);
    const SyntheticPair& pair = pairs.front();

    GradCheckReport report;
    auto class_loss = [&]() -> Tensor {
        Tensor loss = cross_entropy(model_logits(model, cfg, pair), pair.labels);
        if (corrupt_gradient) {
            // Deliberate graph break: the value depends on a parameter but the
            // term enters as a constant, so reverse mode never sees it.
            const double leak = model.stack.dgsct_per_layer[0].a2v.psi.conv[0];
            loss = add(reshape(loss, {}), Tensor::scalar(0.1 * leak));
        }
        return loss;
    };
    for (auto& [name, tensor] : model.stack.trainable_tensors()) {
        report.entries.push_back({name, finite_diff_check_param(class_loss, *tensor)});
    }

    // Contrastive branch: combined objective over the projection MLPs.
    Rng crng = Rng::for_stream(cfg.seed, kContrastiveStream);
    ContrastiveParams cparams = make_contrastive_params(
        cfg.channels_v, cfg.channels_a, cfg.hidden_dim, cfg.hidden_dim, 2 * cfg.hidden_dim, crng);
    Rng trng = Rng::for_stream(cfg.seed, kTextStream);
    Tensor proto_v = Tensor::uniform_init({cfg.classes, cfg.hidden_dim}, cfg.hidden_dim, trng, false);
    Tensor proto_a = Tensor::uniform_init({cfg.classes, cfg.hidden_dim}, cfg.hidden_dim, trng, false);
    std::vector<double> text_v(static_cast<std::size_t>(cfg.timesteps) * cfg.hidden_dim);
    std::vector<double> text_a(text_v.size());
    for (int t = 0; t < cfg.timesteps; ++t) {
        const int label = pair.labels[static_cast<std::size_t>(t)];
        for (int j = 0; j < cfg.hidden_dim; ++j) {
            text_v[static_cast<std::size_t>(t) * cfg.hidden_dim + j] = proto_v.at({label, j});
            text_a[static_cast<std::size_t>(t) * cfg.hidden_dim + j] = proto_a.at({label, j});
        }
    }
    const Tensor tv({cfg.timesteps, cfg.hidden_dim}, std::move(text_v));
    const Tensor ta({cfg.timesteps, cfg.hidden_dim}, std::move(text_a));

    auto contrastive_objective = [&]() -> Tensor {
        const TokenGrid v = tokens_visual(model, cfg, pair.visual);
        const TokenGrid a = tokens_audio(model, cfg, pair.audio);
        const StackOutput out = stack_forward(v, a, model.stack);
        const EmbeddingSet set = embed_modalities(out.v_feat, out.a_feat, tv, ta, cparams);
        const Tensor loss_v = contrastive_loss(set.e_v, set.t_v, cparams.temps.tau_v());
        const Tensor loss_a = contrastive_loss(set.e_a, set.t_a, cparams.temps.tau_a());
        const Tensor sim_v = matmul(set.e_v, transpose2d(set.t_v));
        const Tensor sim_a = matmul(set.e_a, transpose2d(set.t_a));
        return combined_loss(loss_v, loss_a, modality_weights(sim_v, sim_a));
    };
    for (auto& [name, tensor] : cparams.tensors()) {
        report.entries.push_back(
            {"contrastive." + name, finite_diff_check_param(contrastive_objective, *tensor)});
    }

    report.worst = 0.0;
    for (const auto& entry : report.entries) report.worst = std::max(report.worst, entry.max_rel_err);
    report.pass = report.worst <= 1e-4;
    return report;
}

}  // namespace dgsct
