#include "dgsct/contrastive.hpp"

#include <cmath>

namespace dgsct {

Temperatures make_temperatures(double initial) {
    if (initial <= 0.0) throw NonPositiveTemperature("temperature must be positive");
    Temperatures t;
    t.log_tau_v = Tensor({1, 1}, {std::log(initial)}, true);
    t.log_tau_a = Tensor({1, 1}, {std::log(initial)}, true);
    return t;
}

Tensor mlp_forward2(const Tensor& x, const MlpParams& mlp) {
    Tensor hidden = relu_map(add(matmul(x, mlp.w1), mlp.b1));
    return add(matmul(hidden, mlp.w2), mlp.b2);
}

std::vector<std::pair<std::string, Tensor*>> ContrastiveParams::tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto mlp = [&out](const std::string& prefix, MlpParams& m) {
        out.emplace_back(prefix + ".w1", &m.w1);
        out.emplace_back(prefix + ".b1", &m.b1);
        out.emplace_back(prefix + ".w2", &m.w2);
        out.emplace_back(prefix + ".b2", &m.b2);
    };
    mlp("mlp_v", mlp_v);
    mlp("mlp_a", mlp_a);
    mlp("mlp_text_v", mlp_text_v);
    mlp("mlp_text_a", mlp_text_a);
    out.emplace_back("log_tau_v", &temps.log_tau_v);
    out.emplace_back("log_tau_a", &temps.log_tau_a);
    return out;
}

namespace {

MlpParams make_mlp(int in, int hidden, int out, Rng& rng) {
    MlpParams m;
    m.w1 = Tensor::uniform_init({in, hidden}, in, rng);
    m.b1 = Tensor::zeros({1, hidden}, true);
    m.w2 = Tensor::uniform_init({hidden, out}, hidden, rng);
    m.b2 = Tensor::zeros({1, out}, true);
    return m;
}

// Row-normalizes an N x D matrix; zero rows cannot be normalized.
Tensor normalize_rows(const Tensor& x, const char* branch) {
    Tensor sq = reduce_sum(hadamard(x, x), 1);  // N
    for (std::size_t i = 0; i < sq.numel(); ++i) {
        if (sq[i] <= 1e-24) {
            throw NormalizationError(std::string(branch) +
                                     ": zero-norm row cannot be normalized");
        }
    }
    Tensor inv = reshape(pow_map(sq, -0.5), {x.shape()[0], 1});
    return hadamard(x, inv);
}

void check_rows_normalized(const Tensor& m, const char* what) {
    const int n = m.shape()[0], d = m.shape()[1];
    for (int i = 0; i < n; ++i) {
        double sq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double v = m.at({i, j});
            sq += v * v;
        }
        if (std::fabs(sq - 1.0) > 1e-6) {
            throw NormalizationError(std::string(what) + ": rows must be unit-norm");
        }
    }
}

}  // namespace

ContrastiveParams make_contrastive_params(int c_v, int c_a, int text_dim, int shared_dim,
                                          int hidden, Rng& rng) {
    ContrastiveParams p;
    p.mlp_v = make_mlp(c_v, hidden, shared_dim, rng);
    p.mlp_a = make_mlp(c_a, hidden, shared_dim, rng);
    p.mlp_text_v = make_mlp(text_dim, hidden, shared_dim, rng);
    p.mlp_text_a = make_mlp(text_dim, hidden, shared_dim, rng);
    p.temps = make_temperatures();
    return p;
}

EmbeddingSet embed_modalities(const TokenGrid& v_feat, const TokenGrid& a_feat,
                              const Tensor& text_v, const Tensor& text_a,
                              const ContrastiveParams& params) {
    if (text_v.rank() != 2 || text_a.rank() != 2) {
        throw ShapeMismatch("embed_modalities: text inputs must be N x D_t");
    }
    const int n = v_feat.timesteps();
    if (a_feat.timesteps() != n || text_v.shape()[0] != n || text_a.shape()[0] != n) {
        throw ShapeMismatch("embed_modalities: sample counts differ across branches");
    }
    const int d = params.mlp_v.w2.shape()[1];
    if (params.mlp_a.w2.shape()[1] != d || params.mlp_text_v.w2.shape()[1] != d ||
        params.mlp_text_a.w2.shape()[1] != d) {
        throw ShapeMismatch("embed_modalities: projection heads disagree on the shared dimension");
    }
    EmbeddingSet out;
    out.e_v = normalize_rows(mlp_forward2(reduce_mean(v_feat.tokens, 1), params.mlp_v), "visual");
    out.e_a = normalize_rows(mlp_forward2(reduce_mean(a_feat.tokens, 1), params.mlp_a), "audio");
    out.t_v = normalize_rows(mlp_forward2(text_v, params.mlp_text_v), "visual text");
    out.t_a = normalize_rows(mlp_forward2(text_a, params.mlp_text_a), "audio text");
    return out;
}

Tensor contrastive_loss(const Tensor& embeddings, const Tensor& text, const Tensor& tau) {
    if (embeddings.rank() != 2 || text.rank() != 2 || embeddings.shape() != text.shape()) {
        throw ShapeMismatch("contrastive_loss: embeddings and text must both be N x D");
    }
    if (tau.numel() != 1) throw ShapeMismatch("contrastive_loss: temperature must be a scalar");
    if (tau.data()[0] <= 0.0) {
        throw NonPositiveTemperature("contrastive_loss: temperature must be positive");
    }
    check_rows_normalized(embeddings, "contrastive_loss embeddings");
    check_rows_normalized(text, "contrastive_loss text");

    const int n = embeddings.shape()[0];
    Tensor logit_scale = clamp_max(pow_map(reshape(tau, {1, 1}), -1.0), 100.0);
    Tensor sim = hadamard(matmul(embeddings, transpose2d(text)), logit_scale);  // N x N

    const Tensor eye = Tensor::identity(n);
    Tensor diag_et = reduce_sum_all(hadamard(log_softmax_axis(sim, 1), eye));
    Tensor diag_te = reduce_sum_all(hadamard(log_softmax_axis(transpose2d(sim), 1), eye));
    return scale(add(diag_et, diag_te), -0.5 / static_cast<double>(n));
}

ModalityWeights modality_weights(const Tensor& sim_v, const Tensor& sim_a) {
    if (sim_v.rank() != 2 || sim_v.shape()[0] != sim_v.shape()[1] || sim_a.shape() != sim_v.shape()) {
        throw ShapeMismatch("modality_weights: score matrices must be square and equal-shaped");
    }
    const int n = sim_v.shape()[0];
    const Tensor eye = Tensor::identity(n);
    ModalityWeights w;
    w.y_v = reduce_mean_all(reduce_sum(hadamard(softmax_axis(sim_v, 1), eye), 1));
    w.y_a = reduce_mean_all(reduce_sum(hadamard(softmax_axis(sim_a, 1), eye), 1));
    const double total = w.y_v.value() + w.y_a.value();
    if (total <= 0.0) {
        w.w1 = Tensor::scalar(0.5);
        w.w2 = Tensor::scalar(0.5);
        return w;
    }
    Tensor sum = add(w.y_v, w.y_a);
    w.w1 = hadamard(w.y_v, pow_map(sum, -1.0));
    w.w2 = sub(Tensor::scalar(1.0), w.w1);
    return w;
}

Tensor combined_loss(const Tensor& loss_v, const Tensor& loss_a, const ModalityWeights& weights) {
    if (loss_v.numel() != 1 || loss_a.numel() != 1) {
        throw ShapeMismatch("combined_loss: losses must be scalars");
    }
    return add(hadamard(reshape(weights.w1, {}), reshape(loss_v, {})),
               hadamard(reshape(weights.w2, {}), reshape(loss_a, {})));
}

Tensor per_sample_weights(const Tensor& sim_v, const Tensor& sim_a) {
    if (sim_v.rank() != 2 || sim_v.shape()[0] != sim_v.shape()[1] || sim_a.shape() != sim_v.shape()) {
        throw ShapeMismatch("per_sample_weights: score matrices must be square and equal-shaped");
    }
    const int n = sim_v.shape()[0];
    const Tensor pv = softmax_axis(sim_v, 1);
    const Tensor pa = softmax_axis(sim_a, 1);
    std::vector<double> out(static_cast<std::size_t>(n) * 2);
    for (int i = 0; i < n; ++i) {
        const double yv = pv.at({i, i});
        const double ya = pa.at({i, i});
        const double total = yv + ya;
        const double w1 = total > 0.0 ? yv / total : 0.5;
        out[static_cast<std::size_t>(i) * 2] = w1;
        out[static_cast<std::size_t>(i) * 2 + 1] = 1.0 - w1;
    }
    return Tensor({n, 2}, std::move(out));
}

}  // namespace dgsct
