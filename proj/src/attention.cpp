#include "dgsct/attention.hpp"

#include <cmath>

namespace dgsct {

namespace {

int ceil_div4(int c) { return (c + 3) / 4; }

// x is T x a x b, w is b x c: one flattened product, T x a x c.
Tensor stack_matmul(const Tensor& x, const Tensor& w) {
    const int t = x.shape()[0], a = x.shape()[1], b = x.shape()[2];
    return reshape(matmul(reshape(x, {t * a, b}), w), {t, a, w.shape()[1]});
}

// w is a x b, x is T x b x c: w applied to every slice, T x a x c.
Tensor stack_matmul_left(const Tensor& w, const Tensor& x) {
    return permute_last2(stack_matmul(permute_last2(x), transpose2d(w)));
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> DgSctParams::tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto dir = [&out](const std::string& prefix, DirectionParams& d) {
        out.emplace_back(prefix + ".psi.conv", &d.psi.conv);
        out.emplace_back(prefix + ".psi.token_map", &d.psi.token_map);
        out.emplace_back(prefix + ".channel.theta_prompt", &d.channel.theta_prompt);
        out.emplace_back(prefix + ".channel.theta_target", &d.channel.theta_target);
        out.emplace_back(prefix + ".channel.phi_w1", &d.channel.phi_w1);
        out.emplace_back(prefix + ".channel.phi_b1", &d.channel.phi_b1);
        out.emplace_back(prefix + ".channel.phi_w2", &d.channel.phi_w2);
        out.emplace_back(prefix + ".channel.phi_b2", &d.channel.phi_b2);
        out.emplace_back(prefix + ".spatial.theta_prompt", &d.spatial.theta_prompt);
        out.emplace_back(prefix + ".spatial.theta_target", &d.spatial.theta_target);
        out.emplace_back(prefix + ".spatial.theta_out", &d.spatial.theta_out);
        out.emplace_back(prefix + ".gate.rnn.w_in", &d.gate.rnn.w_in);
        out.emplace_back(prefix + ".gate.rnn.w_hidden", &d.gate.rnn.w_hidden);
        out.emplace_back(prefix + ".gate.rnn.bias", &d.gate.rnn.bias);
        out.emplace_back(prefix + ".gate.head", &d.gate.head);
    };
    dir("a2v", a2v);
    dir("v2a", v2a);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> DgSctParams::tensors() const {
    auto mut = const_cast<DgSctParams*>(this)->tensors();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, ptr] : mut) out.emplace_back(name, ptr);
    return out;
}

namespace {

DirectionParams make_direction(int c_src, int n_src, int c_tgt, int n_tgt, int hidden_dim, Rng& rng) {
    DirectionParams d;
    d.psi.conv = Tensor::uniform_init({c_tgt, c_src, 3, 3}, c_src * 9, rng);
    d.psi.token_map = Tensor::uniform_init({n_src, n_tgt}, n_src, rng);

    const int bottleneck = ceil_div4(c_tgt);
    d.channel.theta_prompt = Tensor::uniform_init({c_tgt, c_tgt}, c_tgt, rng);
    d.channel.theta_target = Tensor::uniform_init({c_tgt, c_tgt}, c_tgt, rng);
    d.channel.phi_w1 = Tensor::uniform_init({bottleneck, c_tgt}, c_tgt, rng);
    d.channel.phi_b1 = Tensor::zeros({bottleneck, 1}, true);
    d.channel.phi_w2 = Tensor::uniform_init({c_tgt, bottleneck}, bottleneck, rng);
    d.channel.phi_b2 = Tensor::zeros({c_tgt, 1}, true);

    d.spatial.theta_prompt = Tensor::uniform_init({hidden_dim, c_tgt}, c_tgt, rng);
    d.spatial.theta_target = Tensor::uniform_init({hidden_dim, c_tgt}, c_tgt, rng);
    d.spatial.theta_out = Tensor::uniform_init({1, hidden_dim}, hidden_dim, rng);

    d.gate.rnn.w_in = Tensor::uniform_init({c_src, c_src}, c_src, rng);
    d.gate.rnn.w_hidden = Tensor::uniform_init({c_src, c_src}, c_src, rng);
    d.gate.rnn.bias = Tensor::zeros({1, c_src}, true);
    d.gate.head = Tensor::uniform_init({1, c_src}, c_src, rng);
    return d;
}

}  // namespace

DgSctParams make_dgsct_params(int c_v, int n_v, int c_a, int n_a, int hidden_dim, Rng& rng) {
    DgSctParams p;
    p.a2v = make_direction(c_a, n_a, c_v, n_v, hidden_dim, rng);
    p.v2a = make_direction(c_v, n_v, c_a, n_a, hidden_dim, rng);
    return p;
}

Tensor channel_major(const TokenGrid& grid) { return permute_last2(grid.tokens); }

Tensor project_prompt(const TokenGrid& src, int target_channels, int target_tokens,
                      const PromptProjection& psi) {
    if (!psi.conv.defined() || psi.conv.rank() != 4 || psi.conv.shape()[0] != target_channels) {
        throw ShapeMismatch("project_prompt: conv kernel does not produce the target channels");
    }
    if (!psi.token_map.defined() || psi.token_map.rank() != 2 ||
        psi.token_map.shape()[0] != src.token_count() ||
        psi.token_map.shape()[1] != target_tokens) {
        throw ShapeMismatch("project_prompt: token map must be N_src x N_tgt");
    }
    const int pad = (psi.conv.shape()[2] - 1) / 2;
    const int t_len = src.timesteps();
    Tensor grids = reshape(channel_major(src), {t_len, src.channels(), src.rows, src.cols});
    Tensor conv = conv2d_batched(grids, psi.conv, pad);  // T x C_tgt x rows x cols
    Tensor flat = reshape(conv, {t_len, target_channels, src.token_count()});
    return stack_matmul(flat, psi.token_map);  // T x C_tgt x N_tgt
}

Tensor channel_attention(const Tensor& prompt, const TokenGrid& target,
                         const ChannelAttentionParams& params) {
    if (prompt.rank() != 3) throw ShapeMismatch("channel_attention: prompt must be T x C x N");
    const int c = prompt.shape()[1];
    if (c != target.channels()) {
        throw ShapeMismatch("channel_attention: prompt channels do not match the target");
    }
    const int t_len = prompt.shape()[0];
    if (t_len != target.timesteps()) {
        throw TimestepMismatch("channel_attention: prompt and target timestep counts differ");
    }
    Tensor pooled = reshape(reduce_mean(prompt, 2), {t_len, c, 1});               // a''
    Tensor guide_src = stack_matmul_left(params.theta_prompt, pooled);            // T x C x 1
    Tensor guide_tgt = stack_matmul_left(params.theta_target, channel_major(target));
    Tensor fused = hadamard(guide_tgt, guide_src);                                // T x C x N
    Tensor squeezed = reshape(reduce_mean(fused, 2), {t_len, c, 1});
    Tensor hidden = relu_map(add(stack_matmul_left(params.phi_w1, squeezed),
                                 reshape(params.phi_b1, {1, params.phi_b1.shape()[0], 1})));
    Tensor pre = add(stack_matmul_left(params.phi_w2, hidden), reshape(params.phi_b2, {1, c, 1}));
    return sigmoid_map(pre);  // T x C x 1
}

Tensor spatial_attention(const Tensor& prompt, const Tensor& target_c,
                         const SpatialAttentionParams& params) {
    if (prompt.rank() != 3 || target_c.rank() != 3) {
        throw ShapeMismatch("spatial_attention: operands must be T x C x N");
    }
    if (prompt.shape() != target_c.shape()) {
        throw ShapeMismatch("spatial_attention: prompt and target features must agree in shape");
    }
    Tensor guide = hadamard(stack_matmul_left(params.theta_prompt, prompt),
                            stack_matmul_left(params.theta_target, target_c));  // T x d x N
    Tensor pre = stack_matmul_left(params.theta_out, guide);                    // T x 1 x N
    return sigmoid_map(pre);
}

Tensor temporal_gates(const Tensor& attended_seq, const TemporalGateParams& params) {
    if (attended_seq.rank() != 3) {
        throw ShapeMismatch("temporal_gates: input must be T x C x N");
    }
    if (attended_seq.shape()[0] < 1) throw EmptySequence("temporal_gates: empty sequence");
    Tensor seq = reduce_mean(attended_seq, 2);  // T x C
    Tensor hidden = rnn_forward(seq, params.rnn);
    Tensor pre = matmul(hidden, transpose2d(params.head));  // T x 1
    return sigmoid_map(pre);
}

Tensor spatial_channel_factors(const Tensor& m_c, const Tensor& m_s, const DgSctHyper& hyper) {
    if (m_c.rank() != 3 || m_s.rank() != 3) {
        throw ShapeMismatch("factors: maps must be T x C x 1 and T x 1 x N");
    }
    const int t_len = m_c.shape()[0];
    const int c = m_c.shape()[1];
    const int n = m_s.shape()[2];
    const std::vector<int> full{t_len, c, n};
    Tensor fc = broadcast_to(scale(m_c, hyper.alpha), full);
    Tensor fs = broadcast_to(scale(m_s, hyper.beta), full);
    return add_scalar(add(fc, fs), 1.0);
}

Tensor temporal_factors(const Tensor& gate, const DgSctHyper& hyper) {
    return add_scalar(scale(gate, hyper.gamma), 1.0);
}

TokenGrid modulate(const TokenGrid& target, const Tensor& m_c, const Tensor& m_s,
                   const Tensor* gate, const DgSctHyper& hyper) {
    const int t_len = target.timesteps();
    const int c = target.channels();
    const int n = target.token_count();
    if (m_c.rank() != 3 || m_c.shape()[0] != t_len || m_c.shape()[1] != c || m_c.shape()[2] != 1) {
        throw ShapeMismatch("modulate: channel map must be T x C x 1");
    }
    if (m_s.rank() != 3 || m_s.shape()[0] != t_len || m_s.shape()[1] != 1 || m_s.shape()[2] != n) {
        throw ShapeMismatch("modulate: spatial map must be T x 1 x N");
    }
    Tensor factors = spatial_channel_factors(m_c, m_s, hyper);  // T x C x N
    TokenGrid out = target;
    out.tokens = hadamard(target.tokens, permute_last2(factors));
    if (gate != nullptr) {
        if (gate->rank() != 2 || gate->shape()[0] != t_len || gate->shape()[1] != 1) {
            throw ShapeMismatch("modulate: gate must be T x 1");
        }
        Tensor gf = reshape(temporal_factors(*gate, hyper), {t_len, 1, 1});
        out.tokens = hadamard(out.tokens, gf);
    }
    return out;
}

namespace {

TokenGrid apply_gate(const TokenGrid& grid, const Tensor& gate, const DgSctHyper& hyper) {
    Tensor gf = reshape(temporal_factors(gate, hyper), {grid.timesteps(), 1, 1});
    TokenGrid out = grid;
    out.tokens = hadamard(grid.tokens, gf);
    return out;
}

// Channel-attentive features (m_c + 1) * tokens in channel-major layout.
Tensor channel_attentive(const TokenGrid& target, const Tensor& m_c) {
    return hadamard(channel_major(target), add_scalar(m_c, 1.0));
}

}  // namespace

DgSctOutput dgsct_forward(const TokenGrid& a, const TokenGrid& v, const DgSctParams& params,
                          const DgSctHyper& hyper, bool apply_temporal, DirectionMask mask) {
    if (a.timesteps() != v.timesteps()) {
        throw TimestepMismatch("dgsct_forward: audio has " + std::to_string(a.timesteps()) +
                               " timesteps, visual has " + std::to_string(v.timesteps()));
    }
    DgSctOutput out;

    Tensor prompt_a = project_prompt(a, v.channels(), v.token_count(), params.a2v.psi);
    Tensor prompt_v = project_prompt(v, a.channels(), a.token_count(), params.v2a.psi);

    out.bundle.m_vc = channel_attention(prompt_a, v, params.a2v.channel);
    out.bundle.m_ac = channel_attention(prompt_v, a, params.v2a.channel);

    Tensor v_c = channel_attentive(v, out.bundle.m_vc);
    Tensor a_c = channel_attentive(a, out.bundle.m_ac);

    out.bundle.m_vs = spatial_attention(prompt_a, v_c, params.a2v.spatial);
    out.bundle.m_af = spatial_attention(prompt_v, a_c, params.v2a.spatial);

    TokenGrid v_cs = mask.a2v ? modulate(v, out.bundle.m_vc, out.bundle.m_vs, nullptr, hyper) : v;
    TokenGrid a_cf = mask.v2a ? modulate(a, out.bundle.m_ac, out.bundle.m_af, nullptr, hyper) : a;

    if (apply_temporal) {
        // The visual gate listens to the attended audio stream and vice versa.
        out.bundle.g_v = temporal_gates(channel_major(a_cf), params.a2v.gate);
        out.bundle.g_a = temporal_gates(channel_major(v_cs), params.v2a.gate);
        out.v_out = mask.a2v ? apply_gate(v_cs, out.bundle.g_v, hyper) : v_cs;
        out.a_out = mask.v2a ? apply_gate(a_cf, out.bundle.g_a, hyper) : a_cf;
    } else {
        out.v_out = v_cs;
        out.a_out = a_cf;
    }
    return out;
}

}  // namespace dgsct
