#include "dgsct/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

namespace dgsct {

namespace {

using Payload = std::shared_ptr<const std::vector<double>>;

void ensure_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw Error(std::string(op) + ": operand is undefined");
}



std::size_t numel_of(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return n;
}

std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// outer * len * inner decomposition around `axis`.
struct AxisSplit {
    std::size_t outer, len, inner;
};

AxisSplit split_axis(const std::vector<int>& shape, int axis, const char* op) {
    if (axis < 0 || axis >= static_cast<int>(shape.size())) {
        throw AxisOutOfRange(std::string(op) + ": axis " + std::to_string(axis) +
                             " out of range for rank " + std::to_string(shape.size()));
    }
    AxisSplit s{1, static_cast<std::size_t>(shape[axis]), 1};
    for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(shape[i]);
    for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) {
        s.inner *= static_cast<std::size_t>(shape[i]);
    }
    return s;
}

// Row-major strides of `from` viewed against `to`, 0 on stretched axes.
std::vector<std::size_t> projected_strides(const std::vector<int>& to, const std::vector<int>& from) {
    std::vector<std::size_t> strides(from.size(), 0);
    std::size_t s = 1;
    for (int i = static_cast<int>(from.size()) - 1; i >= 0; --i) {
        strides[static_cast<std::size_t>(i)] = (from[static_cast<std::size_t>(i)] == 1 &&
                                                to[static_cast<std::size_t>(i)] != 1)
                                                   ? 0
                                                   : s;
        s *= static_cast<std::size_t>(from[static_cast<std::size_t>(i)]);
    }
    return strides;
}

void check_broadcastable(const std::vector<int>& a, const std::vector<int>& b, const char* op) {
    if (a.size() != b.size()) {
        throw ShapeMismatch(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " +
                            shape_str(b) + " (no implicit rank promotion)");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (b[i] != a[i] && b[i] != 1) {
            throw ShapeMismatch(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                shape_str(b) + " are not broadcast-compatible");
        }
    }
}

// Walks the flat indices of `out_shape` in row-major order alongside the
// projected flat index into a broadcast operand.
class BroadcastIter {
public:
    BroadcastIter(const std::vector<int>& out_shape, const std::vector<int>& from_shape)
        : shape_(out_shape), strides_(projected_strides(out_shape, from_shape)),
          index_(out_shape.size(), 0) {}

    std::size_t projected() const { return proj_; }

    void advance() {
        for (int i = static_cast<int>(shape_.size()) - 1; i >= 0; --i) {
            auto ui = static_cast<std::size_t>(i);
            ++index_[ui];
            proj_ += strides_[ui];
            if (index_[ui] < shape_[ui]) return;
            index_[ui] = 0;
            proj_ -= strides_[ui] * static_cast<std::size_t>(shape_[ui]);
        }
    }

private:
    std::vector<int> shape_;
    std::vector<std::size_t> strides_;
    std::vector<int> index_;
    std::size_t proj_ = 0;
};

// Shared scaffolding for binary elementwise ops with the b-stretches rule.
// combine(a_i, b_j) computes the value; the per-op code records its own node.
template <typename F>
std::vector<double> elementwise_broadcast(const Tensor& a, const Tensor& b, const char* op, F combine) {
    check_broadcastable(a.shape(), b.shape(), op);
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    const auto& da = a.data();
    const auto& db = b.data();
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < n; ++i) out[i] = combine(da[i], db[i]);
    } else {
        BroadcastIter it(a.shape(), b.shape());
        for (std::size_t i = 0; i < n; ++i, it.advance()) out[i] = combine(da[i], db[it.projected()]);
    }
    return out;
}

// Unary elementwise scaffold: fn(x) -> y, dfn(x, y) -> dy/dx. The result
// constructor rejects non-finite outputs (exp overflow and friends).
Tensor unary_map(const Tensor& x, const char* op, double (*fn)(double), double (*dfn)(double, double)) {
    ensure_defined(x, op);
    const std::size_t n = x.numel();
    std::vector<double> out(n);
    const auto& dx = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(dx[i]);
    Tensor result(x.shape(), std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        Payload px = x.payload();
        Payload py = result.payload();
        tape->record(result, {hx}, [hx, px, py, dfn](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfn((*px)[i], (*py)[i]);
        });
    }
    return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    ensure_defined(a, "add");
    ensure_defined(b, "add");
    std::vector<double> out = elementwise_broadcast(a, b, "add", [](double x, double y) { return x + y; });
    Tensor result(a.shape(), std::move(out));
    Tape* tape = Tape::current();
    if (tape && (tape->grad_active(a) || tape->grad_active(b))) {
        const int ha = tape->input_handle(a);
        const int hb = tape->input_handle(b);
        const std::vector<int> oshape = a.shape();
        const std::vector<int> bshape = b.shape();
        tape->record(result, {ha, hb}, [ha, hb, oshape, bshape](std::span<const double> g, Tape& t) {
            if (ha >= 0) {
                auto ga = t.grad_buffer(ha);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (hb >= 0) {
                auto gb = t.grad_buffer(hb);
                if (oshape == bshape) {
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                } else {
                    BroadcastIter it(oshape, bshape);
                    for (std::size_t i = 0; i < g.size(); ++i, it.advance()) gb[it.projected()] += g[i];
                }
            }
        });
    }
    return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    ensure_defined(a, "sub");
    ensure_defined(b, "sub");
    std::vector<double> out = elementwise_broadcast(a, b, "sub", [](double x, double y) { return x - y; });
    Tensor result(a.shape(), std::move(out));
    Tape* tape = Tape::current();
    if (tape && (tape->grad_active(a) || tape->grad_active(b))) {
        const int ha = tape->input_handle(a);
        const int hb = tape->input_handle(b);
        const std::vector<int> oshape = a.shape();
        const std::vector<int> bshape = b.shape();
        tape->record(result, {ha, hb}, [ha, hb, oshape, bshape](std::span<const double> g, Tape& t) {
            if (ha >= 0) {
                auto ga = t.grad_buffer(ha);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (hb >= 0) {
                auto gb = t.grad_buffer(hb);
                if (oshape == bshape) {
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                } else {
                    BroadcastIter it(oshape, bshape);
                    for (std::size_t i = 0; i < g.size(); ++i, it.advance()) gb[it.projected()] -= g[i];
                }
            }
        });
    }
    return result;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    ensure_defined(a, "hadamard");
    ensure_defined(b, "hadamard");
    std::vector<double> out =
        elementwise_broadcast(a, b, "hadamard", [](double x, double y) { return x * y; });
    Tensor result(a.shape(), std::move(out));
    Tape* tape = Tape::current();
    if (tape && (tape->grad_active(a) || tape->grad_active(b))) {
        const int ha = tape->input_handle(a);
        const int hb = tape->input_handle(b);
        Payload pa = a.payload();
        Payload pb = b.payload();
        const std::vector<int> oshape = a.shape();
        const std::vector<int> bshape = b.shape();
        const bool same = a.shape() == b.shape();
        tape->record(result, {ha, hb},
                     [ha, hb, pa, pb, oshape, bshape, same](std::span<const double> g, Tape& t) {
                         if (ha >= 0) {
                             auto ga = t.grad_buffer(ha);
                             if (same) {
                                 for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*pb)[i];
                             } else {
                                 BroadcastIter it(oshape, bshape);
                                 for (std::size_t i = 0; i < g.size(); ++i, it.advance()) {
                                     ga[i] += g[i] * (*pb)[it.projected()];
                                 }
                             }
                         }
                         if (hb >= 0) {
                             auto gb = t.grad_buffer(hb);
                             if (same) {
                                 for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (*pa)[i];
                             } else {
                                 BroadcastIter it(oshape, bshape);
                                 for (std::size_t i = 0; i < g.size(); ++i, it.advance()) {
                                     gb[it.projected()] += g[i] * (*pa)[i];
                                 }
                             }
                         }
                     });
    }
    return result;
}

Tensor scale(const Tensor& x, double c) {
    ensure_defined(x, "scale");
    if (!std::isfinite(c)) throw NonFiniteInput("scale: non-finite factor");
    const std::size_t n = x.numel();
    std::vector<double> out(n);
    const auto& dx = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = dx[i] * c;
    Tensor result(x.shape(), std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        tape->record(result, {hx}, [hx, c](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c;
        });
    }
    return result;
}

Tensor add_scalar(const Tensor& x, double c) {
    ensure_defined(x, "add_scalar");
    if (!std::isfinite(c)) throw NonFiniteInput("add_scalar: non-finite addend");
    const std::size_t n = x.numel();
    std::vector<double> out(n);
    const auto& dx = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = dx[i] + c;
    Tensor result(x.shape(), std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        tape->record(result, {hx}, [hx](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return result;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    ensure_defined(a, "matmul");
    ensure_defined(b, "matmul");
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeMismatch("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()));
    }
    if (a.shape()[1] != b.shape()[0]) {
        throw ShapeMismatch("matmul: inner extents differ, " + std::to_string(a.shape()[1]) + " vs " +
                            std::to_string(b.shape()[0]));
    }
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    {
        const double* pa = a.data().data();
        const double* pb = b.data().data();
        double* po = out.data();
        for (int i = 0; i < m; ++i) {
            for (int kk = 0; kk < k; ++kk) {
                const double aik = pa[static_cast<std::size_t>(i) * k + kk];
                const double* brow = pb + static_cast<std::size_t>(kk) * n;
                double* orow = po + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
            }
        }
    }
    Tensor result({m, n}, std::move(out));
    Tape* tape = Tape::current();
    if (tape && (tape->grad_active(a) || tape->grad_active(b))) {
        const int ha = tape->input_handle(a);
        const int hb = tape->input_handle(b);
        Payload pa = a.payload();
        Payload pb = b.payload();
        tape->record(result, {ha, hb}, [ha, hb, pa, pb, m, k, n](std::span<const double> g, Tape& t) {
            if (ha >= 0) {
                auto ga = t.grad_buffer(ha);  // g * b^T: (m x n)(n x k)
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) {
                        const double gij = g[static_cast<std::size_t>(i) * n + j];
                        const double* brow = pb->data() + j;
                        for (int kk = 0; kk < k; ++kk) {
                            ga[static_cast<std::size_t>(i) * k + kk] +=
                                gij * brow[static_cast<std::size_t>(kk) * n];
                        }
                    }
                }
            }
            if (hb >= 0) {
                auto gb = t.grad_buffer(hb);  // a^T * g: (k x m)(m x n)
                for (int kk = 0; kk < k; ++kk) {
                    for (int i = 0; i < m; ++i) {
                        const double aik = (*pa)[static_cast<std::size_t>(i) * k + kk];
                        const double* grow = g.data() + static_cast<std::size_t>(i) * n;
                        double* gbrow = gb.data() + static_cast<std::size_t>(kk) * n;
                        for (int j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
                    }
                }
            }
        });
    }
    return result;
}

Tensor transpose2d(const Tensor& x) {
    ensure_defined(x, "transpose2d");
    if (x.rank() != 2) throw ShapeMismatch("transpose2d: expects rank 2, got " + shape_str(x.shape()));
    const int m = x.shape()[0], n = x.shape()[1];
    std::vector<double> out(x.numel());
    const auto& dx = x.data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<std::size_t>(j) * m + i] = dx[static_cast<std::size_t>(i) * n + j];
        }
    }
    Tensor result({n, m}, std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        tape->record(result, {hx}, [hx, m, n](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    gx[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
                }
            }
        });
    }
    return result;
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    ensure_defined(x, "reshape");
    if (numel_of(shape) != x.numel()) {
        throw ShapeMismatch("reshape: element count changes from " + std::to_string(x.numel()) +
                            " to " + std::to_string(numel_of(shape)));
    }
    Tensor result(std::move(shape), x.data());
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        tape->record(result, {hx}, [hx](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return result;
}

Tensor broadcast_to(const Tensor& x, const std::vector<int>& shape) {
    ensure_defined(x, "broadcast_to");
    check_broadcastable(shape, x.shape(), "broadcast_to");
    const std::size_t n = numel_of(shape);
    std::vector<double> out(n);
    const auto& dx = x.data();
    BroadcastIter it(shape, x.shape());
    for (std::size_t i = 0; i < n; ++i, it.advance()) out[i] = dx[it.projected()];
    Tensor result(shape, std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        const std::vector<int> oshape = shape;
        const std::vector<int> xshape = x.shape();
        tape->record(result, {hx}, [hx, oshape, xshape](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            BroadcastIter it(oshape, xshape);
            for (std::size_t i = 0; i < g.size(); ++i, it.advance()) gx[it.projected()] += g[i];
        });
    }
    return result;
}

Tensor narrow(const Tensor& x, int axis, int start, int len) {
    ensure_defined(x, "narrow");
    const AxisSplit s = split_axis(x.shape(), axis, "narrow");
    if (start < 0 || len <= 0 || start + len > static_cast<int>(s.len)) {
        throw ShapeMismatch("narrow: window [" + std::to_string(start) + ", " +
                            std::to_string(start + len) + ") exceeds extent " + std::to_string(s.len));
    }
    std::vector<int> oshape = x.shape();
    oshape[static_cast<std::size_t>(axis)] = len;
    std::vector<double> out(numel_of(oshape));
    const auto& dx = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (int j = 0; j < len; ++j) {
            const std::size_t src = (o * s.len + static_cast<std::size_t>(start + j)) * s.inner;
            const std::size_t dst = (o * static_cast<std::size_t>(len) + static_cast<std::size_t>(j)) * s.inner;
            std::copy(dx.begin() + static_cast<std::ptrdiff_t>(src),
                      dx.begin() + static_cast<std::ptrdiff_t>(src + s.inner),
                      out.begin() + static_cast<std::ptrdiff_t>(dst));
        }
    }
    Tensor result(oshape, std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        tape->record(result, {hx}, [hx, s, start, len](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (int j = 0; j < len; ++j) {
                    const std::size_t dst = (o * s.len + static_cast<std::size_t>(start + j)) * s.inner;
                    const std::size_t src =
                        (o * static_cast<std::size_t>(len) + static_cast<std::size_t>(j)) * s.inner;
                    for (std::size_t i = 0; i < s.inner; ++i) gx[dst + i] += g[src + i];
                }
            }
        });
    }
    return result;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeMismatch("concat: no operands");
    for (const Tensor& p : parts) ensure_defined(p, "concat");
    const std::vector<int>& base = parts.front().shape();
    int total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != static_cast<int>(base.size())) {
            throw ShapeMismatch("concat: rank mismatch across operands");
        }
        for (int i = 0; i < p.rank(); ++i) {
            if (i != axis && p.shape()[static_cast<std::size_t>(i)] != base[static_cast<std::size_t>(i)]) {
                throw ShapeMismatch("concat: extents differ outside the concat axis");
            }
        }
        total += p.shape()[static_cast<std::size_t>(axis)];
    }
    const AxisSplit s0 = split_axis(base, axis, "concat");
    std::vector<int> oshape = base;
    oshape[static_cast<std::size_t>(axis)] = total;
    std::vector<double> out(numel_of(oshape));
    const std::size_t out_len = static_cast<std::size_t>(total);
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t plen = static_cast<std::size_t>(p.shape()[static_cast<std::size_t>(axis)]);
        const auto& dp = p.data();
        for (std::size_t o = 0; o < s0.outer; ++o) {
            for (std::size_t j = 0; j < plen; ++j) {
                const std::size_t src = (o * plen + j) * s0.inner;
                const std::size_t dst = (o * out_len + offset + j) * s0.inner;
                std::copy(dp.begin() + static_cast<std::ptrdiff_t>(src),
                          dp.begin() + static_cast<std::ptrdiff_t>(src + s0.inner),
                          out.begin() + static_cast<std::ptrdiff_t>(dst));
            }
        }
        offset += plen;
    }
    Tensor result(oshape, std::move(out));
    Tape* tape = Tape::current();
    bool active = false;
    for (const Tensor& p : parts) {
        if (tape && tape->grad_active(p)) active = true;
    }
    if (tape && active) {
        std::vector<int> handles;
        std::vector<std::size_t> lens;
        handles.reserve(parts.size());
        for (const Tensor& p : parts) {
            handles.push_back(tape->input_handle(p));
            lens.push_back(static_cast<std::size_t>(p.shape()[static_cast<std::size_t>(axis)]));
        }
        tape->record(result, handles, [handles, lens, s0, out_len](std::span<const double> g, Tape& t) {
            std::size_t offset = 0;
            for (std::size_t pi = 0; pi < handles.size(); ++pi) {
                const std::size_t plen = lens[pi];
                if (handles[pi] >= 0) {
                    auto gp = t.grad_buffer(handles[pi]);
                    for (std::size_t o = 0; o < s0.outer; ++o) {
                        for (std::size_t j = 0; j < plen; ++j) {
                            const std::size_t dst = (o * plen + j) * s0.inner;
                            const std::size_t src = (o * out_len + offset + j) * s0.inner;
                            for (std::size_t i = 0; i < s0.inner; ++i) gp[dst + i] += g[src + i];
                        }
                    }
                }
                offset += plen;
            }
        });
    }
    return result;
}

namespace {

Tensor reduce_axis(const Tensor& x, int axis, bool mean, const char* op) {
    ensure_defined(x, op);
    const AxisSplit s = split_axis(x.shape(), axis, op);
    std::vector<int> oshape;
    for (int i = 0; i < x.rank(); ++i) {
        if (i != axis) oshape.push_back(x.shape()[static_cast<std::size_t>(i)]);
    }
    std::vector<double> out(s.outer * s.inner, 0.0);
    const auto& dx = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.len; ++j) {
            const std::size_t src = (o * s.len + j) * s.inner;
            double* dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += dx[src + i];
        }
    }
    const double norm = mean ? 1.0 / static_cast<double>(s.len) : 1.0;
    if (mean) {
        for (double& v : out) v *= norm;
    }
    Tensor result(oshape, std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        tape->record(result, {hx}, [hx, s, norm](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t j = 0; j < s.len; ++j) {
                    const std::size_t dst = (o * s.len + j) * s.inner;
                    const double* src = g.data() + o * s.inner;
                    for (std::size_t i = 0; i < s.inner; ++i) gx[dst + i] += src[i] * norm;
                }
            }
        });
    }
    return result;
}

Tensor reduce_all(const Tensor& x, bool mean, const char* op) {
    ensure_defined(x, op);
    const auto& dx = x.data();
    double acc = 0.0;
    for (double v : dx) acc += v;
    const double norm = mean ? 1.0 / static_cast<double>(x.numel()) : 1.0;
    Tensor result(std::vector<int>{}, {acc * norm});
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        tape->record(result, {hx}, [hx, norm](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (double& v : gx) v += g[0] * norm;
        });
    }
    return result;
}

}  // namespace

Tensor reduce_mean(const Tensor& x, int axis) { return reduce_axis(x, axis, true, "reduce_mean"); }
Tensor reduce_sum(const Tensor& x, int axis) { return reduce_axis(x, axis, false, "reduce_sum"); }
Tensor reduce_sum_all(const Tensor& x) { return reduce_all(x, false, "reduce_sum_all"); }
Tensor reduce_mean_all(const Tensor& x) { return reduce_all(x, true, "reduce_mean_all"); }

Tensor sigmoid_map(const Tensor& x) {
    return unary_map(
        x, "sigmoid_map",
        [](double v) {
            double s = 1.0 / (1.0 + std::exp(-v));
            // Keep the output strictly inside (0, 1) even at saturation.
            if (s <= 0.0) s = std::nextafter(0.0, 1.0);
            if (s >= 1.0) s = std::nextafter(1.0, 0.0);
            return s;
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_map(const Tensor& x) {
    return unary_map(
        x, "tanh_map", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor relu_map(const Tensor& x) {
    return unary_map(
        x, "relu_map", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu_map(const Tensor& x) {
    // tanh approximation; the derivative below matches this approximation.
    return unary_map(
        x, "gelu_map",
        [](double v) {
            const double c = 0.7978845608028654;  // sqrt(2/pi)
            const double t = std::tanh(c * (v + 0.044715 * v * v * v));
            return 0.5 * v * (1.0 + t);
        },
        [](double v, double) {
            const double c = 0.7978845608028654;
            const double a = 0.044715;
            const double t = std::tanh(c * (v + a * v * v * v));
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v);
        });
}

Tensor exp_map(const Tensor& x) {
    return unary_map(
        x, "exp_map", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor pow_map(const Tensor& x, double exponent) {
    ensure_defined(x, "pow_map");
    const std::size_t n = x.numel();
    std::vector<double> out(n);
    const auto& dx = x.data();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::pow(dx[i], exponent);
        if (!std::isfinite(out[i])) {
            throw NonFiniteInput("pow_map: non-finite result (base " + std::to_string(dx[i]) +
                                 ", exponent " + std::to_string(exponent) + ")");
        }
    }
    Tensor result(x.shape(), std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        Payload px = x.payload();
        tape->record(result, {hx}, [hx, px, exponent](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i] * exponent * std::pow((*px)[i], exponent - 1.0);
            }
        });
    }
    return result;
}

Tensor clamp_max(const Tensor& x, double cap) {
    ensure_defined(x, "clamp_max");
    if (!std::isfinite(cap)) throw NonFiniteInput("clamp_max: non-finite cap");
    const std::size_t n = x.numel();
    std::vector<double> out(n);
    const auto& dx = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::min(dx[i], cap);
    Tensor result(x.shape(), std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        Payload px = x.payload();
        tape->record(result, {hx}, [hx, px, cap](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if ((*px)[i] <= cap) gx[i] += g[i];
            }
        });
    }
    return result;
}

Tensor softmax_axis(const Tensor& x, int axis) {
    ensure_defined(x, "softmax_axis");
    const AxisSplit s = split_axis(x.shape(), axis, "softmax_axis");
    const auto& dx = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            double m = dx[base];
            for (std::size_t j = 1; j < s.len; ++j) m = std::max(m, dx[base + j * s.inner]);
            double sum = 0.0;
            for (std::size_t j = 0; j < s.len; ++j) {
                const double e = std::exp(dx[base + j * s.inner] - m);
                out[base + j * s.inner] = e;
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] *= inv;
        }
    }
    Tensor result(x.shape(), std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        Payload py = result.payload();
        tape->record(result, {hx}, [hx, py, s](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t i = 0; i < s.inner; ++i) {
                    const std::size_t base = o * s.len * s.inner + i;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < s.len; ++j) {
                        dot += g[base + j * s.inner] * (*py)[base + j * s.inner];
                    }
                    for (std::size_t j = 0; j < s.len; ++j) {
                        const std::size_t k = base + j * s.inner;
                        gx[k] += (*py)[k] * (g[k] - dot);
                    }
                }
            }
        });
    }
    return result;
}

Tensor log_softmax_axis(const Tensor& x, int axis) {
    ensure_defined(x, "log_softmax_axis");
    const AxisSplit s = split_axis(x.shape(), axis, "log_softmax_axis");
    const auto& dx = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            double m = dx[base];
            for (std::size_t j = 1; j < s.len; ++j) m = std::max(m, dx[base + j * s.inner]);
            double sum = 0.0;
            for (std::size_t j = 0; j < s.len; ++j) sum += std::exp(dx[base + j * s.inner] - m);
            const double lse = m + std::log(sum);
            for (std::size_t j = 0; j < s.len; ++j) {
                out[base + j * s.inner] = dx[base + j * s.inner] - lse;
            }
        }
    }
    Tensor result(x.shape(), std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        Payload py = result.payload();
        tape->record(result, {hx}, [hx, py, s](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t i = 0; i < s.inner; ++i) {
                    const std::size_t base = o * s.len * s.inner + i;
                    double gsum = 0.0;
                    for (std::size_t j = 0; j < s.len; ++j) gsum += g[base + j * s.inner];
                    for (std::size_t j = 0; j < s.len; ++j) {
                        const std::size_t k = base + j * s.inner;
                        gx[k] += g[k] - std::exp((*py)[k]) * gsum;
                    }
                }
            }
        });
    }
    return result;
}

namespace {

struct ConvDims {
    int cin, cout, h, w, k, pad;
};

// Gathers one padded plane stack into patch columns: rows index
// (ci, dy, dx), columns index output positions. Zero padding is implicit.
void im2col_plane(const double* x, double* cols, const ConvDims& d) {
    const int hw = d.h * d.w;
    std::size_t row = 0;
    for (int ci = 0; ci < d.cin; ++ci) {
        const double* xbase = x + static_cast<std::size_t>(ci) * hw;
        for (int dy = 0; dy < d.k; ++dy) {
            for (int dx = 0; dx < d.k; ++dx, ++row) {
                double* dst = cols + row * hw;
                for (int y = 0; y < d.h; ++y) {
                    const int sy = y + dy - d.pad;
                    if (sy < 0 || sy >= d.h) {
                        for (int xx = 0; xx < d.w; ++xx) dst[y * d.w + xx] = 0.0;
                        continue;
                    }
                    const double* xrow = xbase + static_cast<std::size_t>(sy) * d.w;
                    for (int xx = 0; xx < d.w; ++xx) {
                        const int sx = xx + dx - d.pad;
                        dst[y * d.w + xx] = (sx < 0 || sx >= d.w) ? 0.0 : xrow[sx];
                    }
                }
            }
        }
    }
}

// Scatter-add of patch-column gradients back onto the input plane.
void col2im_add_plane(const double* gcols, double* gx, const ConvDims& d) {
    const int hw = d.h * d.w;
    std::size_t row = 0;
    for (int ci = 0; ci < d.cin; ++ci) {
        double* gxbase = gx + static_cast<std::size_t>(ci) * hw;
        for (int dy = 0; dy < d.k; ++dy) {
            for (int dx = 0; dx < d.k; ++dx, ++row) {
                const double* src = gcols + row * hw;
                for (int y = 0; y < d.h; ++y) {
                    const int sy = y + dy - d.pad;
                    if (sy < 0 || sy >= d.h) continue;
                    double* gxrow = gxbase + static_cast<std::size_t>(sy) * d.w;
                    for (int xx = 0; xx < d.w; ++xx) {
                        const int sx = xx + dx - d.pad;
                        if (sx >= 0 && sx < d.w) gxrow[sx] += src[y * d.w + xx];
                    }
                }
            }
        }
    }
}

// out(co, :) += kernel(co, :) * cols.
void conv_cols_forward(const double* cols, const double* kernel, double* out, const ConvDims& d) {
    const int hw = d.h * d.w;
    const int rows = d.cin * d.k * d.k;
    for (int co = 0; co < d.cout; ++co) {
        const double* krow = kernel + static_cast<std::size_t>(co) * rows;
        double* orow = out + static_cast<std::size_t>(co) * hw;
        for (int r = 0; r < rows; ++r) {
            const double kv = krow[r];
            const double* crow = cols + static_cast<std::size_t>(r) * hw;
            for (int p = 0; p < hw; ++p) orow[p] += kv * crow[p];
        }
    }
}

ConvDims check_conv(const Tensor& x, const Tensor& kernel, int padding, int rank, const char* op) {
    ensure_defined(x, op);
    ensure_defined(kernel, op);
    if (x.rank() != rank) {
        throw ShapeMismatch(std::string(op) + ": input rank must be " + std::to_string(rank));
    }
    if (kernel.rank() != 4) {
        throw ShapeMismatch(std::string(op) + ": kernel must be C_out x C_in x k x k");
    }
    const int off = rank - 3;
    ConvDims d;
    d.cin = x.shape()[off + 0];
    d.h = x.shape()[off + 1];
    d.w = x.shape()[off + 2];
    d.cout = kernel.shape()[0];
    d.k = kernel.shape()[2];
    d.pad = padding;
    if (kernel.shape()[3] != d.k) throw ShapeMismatch(std::string(op) + ": kernel window must be square");
    if (d.k % 2 == 0) {
        throw EvenKernel(std::string(op) + ": kernel size must be odd, got " + std::to_string(d.k));
    }
    if (kernel.shape()[1] != d.cin) {
        throw ShapeMismatch(std::string(op) + ": kernel input channels " +
                            std::to_string(kernel.shape()[1]) + " != input channels " +
                            std::to_string(d.cin));
    }
    if (padding != (d.k - 1) / 2) {
        throw ShapeMismatch(std::string(op) + ": padding must be (k-1)/2 to preserve the spatial extent");
    }
    return d;
}

Tensor conv_impl(const Tensor& x, const Tensor& kernel, const ConvDims& d, int batch,
                 std::vector<int> out_shape) {
    const std::size_t in_plane = static_cast<std::size_t>(d.cin) * d.h * d.w;
    const std::size_t out_plane = static_cast<std::size_t>(d.cout) * d.h * d.w;
    const int hw = d.h * d.w;
    const int rows = d.cin * d.k * d.k;
    std::vector<double> out(static_cast<std::size_t>(batch) * out_plane, 0.0);
    std::vector<double> cols(static_cast<std::size_t>(rows) * hw);
    for (int t = 0; t < batch; ++t) {
        im2col_plane(x.data().data() + t * in_plane, cols.data(), d);
        conv_cols_forward(cols.data(), kernel.data().data(), out.data() + t * out_plane, d);
    }
    Tensor result(std::move(out_shape), std::move(out));
    Tape* tape = Tape::current();
    if (tape && (tape->grad_active(x) || tape->grad_active(kernel))) {
        const int hx = tape->input_handle(x);
        const int hk = tape->input_handle(kernel);
        Payload sx = x.payload();
        Payload sk = kernel.payload();
        tape->record(
            result, {hx, hk},
            [hx, hk, sx, sk, d, batch, in_plane, out_plane, hw, rows](std::span<const double> g, Tape& t) {
                double* gx = hx >= 0 ? t.grad_buffer(hx).data() : nullptr;
                double* gk = hk >= 0 ? t.grad_buffer(hk).data() : nullptr;
                std::vector<double> cols(static_cast<std::size_t>(rows) * hw);
                std::vector<double> gcols(gx ? cols.size() : 0);
                for (int b = 0; b < batch; ++b) {
                    const double* gslice = g.data() + b * out_plane;
                    im2col_plane(sx->data() + b * in_plane, cols.data(), d);
                    if (gk) {
                        // gK(co, r) += g(co, :) . cols(r, :)
                        for (int co = 0; co < d.cout; ++co) {
                            const double* grow = gslice + static_cast<std::size_t>(co) * hw;
                            double* gkrow = gk + static_cast<std::size_t>(co) * rows;
                            for (int r = 0; r < rows; ++r) {
                                const double* crow = cols.data() + static_cast<std::size_t>(r) * hw;
                                double acc = 0.0;
                                for (int p = 0; p < hw; ++p) acc += grow[p] * crow[p];
                                gkrow[r] += acc;
                            }
                        }
                    }
                    if (gx) {
                        // gCols = K^T g, then scatter back onto the plane.
                        std::fill(gcols.begin(), gcols.end(), 0.0);
                        for (int co = 0; co < d.cout; ++co) {
                            const double* grow = gslice + static_cast<std::size_t>(co) * hw;
                            const double* krow = sk->data() + static_cast<std::size_t>(co) * rows;
                            for (int r = 0; r < rows; ++r) {
                                const double kv = krow[r];
                                double* gcrow = gcols.data() + static_cast<std::size_t>(r) * hw;
                                for (int p = 0; p < hw; ++p) gcrow[p] += kv * grow[p];
                            }
                        }
                        col2im_add_plane(gcols.data(), gx + b * in_plane, d);
                    }
                }
            });
    }
    return result;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, int padding) {
    const ConvDims d = check_conv(x, kernel, padding, 3, "conv2d");
    return conv_impl(x, kernel, d, 1, {d.cout, d.h, d.w});
}

Tensor conv2d_batched(const Tensor& x, const Tensor& kernel, int padding) {
    const ConvDims d = check_conv(x, kernel, padding, 4, "conv2d_batched");
    const int batch = x.shape()[0];
    return conv_impl(x, kernel, d, batch, {batch, d.cout, d.h, d.w});
}

Tensor matmul_batched(const Tensor& a, const Tensor& b) {
    ensure_defined(a, "matmul_batched");
    ensure_defined(b, "matmul_batched");
    if (a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0]) {
        throw ShapeMismatch("matmul_batched: operands must be T x m x k and T x k x n");
    }
    if (a.shape()[2] != b.shape()[1]) {
        throw ShapeMismatch("matmul_batched: inner extents differ, " + std::to_string(a.shape()[2]) +
                            " vs " + std::to_string(b.shape()[1]));
    }
    const int batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
    const std::size_t a_plane = static_cast<std::size_t>(m) * k;
    const std::size_t b_plane = static_cast<std::size_t>(k) * n;
    const std::size_t o_plane = static_cast<std::size_t>(m) * n;
    std::vector<double> out(static_cast<std::size_t>(batch) * o_plane, 0.0);
    for (int t = 0; t < batch; ++t) {
        const double* pa = a.data().data() + t * a_plane;
        const double* pb = b.data().data() + t * b_plane;
        double* po = out.data() + t * o_plane;
        for (int i = 0; i < m; ++i) {
            for (int kk = 0; kk < k; ++kk) {
                const double aik = pa[static_cast<std::size_t>(i) * k + kk];
                const double* brow = pb + static_cast<std::size_t>(kk) * n;
                double* orow = po + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
            }
        }
    }
    Tensor result({batch, m, n}, std::move(out));
    Tape* tape = Tape::current();
    if (tape && (tape->grad_active(a) || tape->grad_active(b))) {
        const int ha = tape->input_handle(a);
        const int hb = tape->input_handle(b);
        Payload pa = a.payload();
        Payload pb = b.payload();
        tape->record(result, {ha, hb},
                     [ha, hb, pa, pb, batch, m, k, n, a_plane, b_plane, o_plane](
                         std::span<const double> g, Tape& t) {
                         for (int bt = 0; bt < batch; ++bt) {
                             const double* gslice = g.data() + bt * o_plane;
                             if (ha >= 0) {
                                 double* ga = t.grad_buffer(ha).data() + bt * a_plane;
                                 const double* bb = pb->data() + bt * b_plane;
                                 for (int i = 0; i < m; ++i) {
                                     for (int j = 0; j < n; ++j) {
                                         const double gij = gslice[static_cast<std::size_t>(i) * n + j];
                                         for (int kk = 0; kk < k; ++kk) {
                                             ga[static_cast<std::size_t>(i) * k + kk] +=
                                                 gij * bb[static_cast<std::size_t>(kk) * n + j];
                                         }
                                     }
                                 }
                             }
                             if (hb >= 0) {
                                 double* gb = t.grad_buffer(hb).data() + bt * b_plane;
                                 const double* aa = pa->data() + bt * a_plane;
                                 for (int kk = 0; kk < k; ++kk) {
                                     for (int i = 0; i < m; ++i) {
                                         const double aik = aa[static_cast<std::size_t>(i) * k + kk];
                                         const double* grow = gslice + static_cast<std::size_t>(i) * n;
                                         double* gbrow = gb + static_cast<std::size_t>(kk) * n;
                                         for (int j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
                                     }
                                 }
                             }
                         }
                     });
    }
    return result;
}

Tensor permute_last2(const Tensor& x) {
    ensure_defined(x, "permute_last2");
    if (x.rank() != 3) throw ShapeMismatch("permute_last2: expects rank 3");
    const int batch = x.shape()[0], m = x.shape()[1], n = x.shape()[2];
    const std::size_t plane = static_cast<std::size_t>(m) * n;
    std::vector<double> out(x.numel());
    const auto& dx = x.data();
    for (int t = 0; t < batch; ++t) {
        const double* src = dx.data() + t * plane;
        double* dst = out.data() + t * plane;
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                dst[static_cast<std::size_t>(j) * m + i] = src[static_cast<std::size_t>(i) * n + j];
            }
        }
    }
    Tensor result({batch, n, m}, std::move(out));
    Tape* tape = Tape::current();
    if (tape && tape->grad_active(x)) {
        const int hx = tape->input_handle(x);
        tape->record(result, {hx}, [hx, batch, m, n, plane](std::span<const double> g, Tape& t) {
            auto gx = t.grad_buffer(hx);
            for (int bt = 0; bt < batch; ++bt) {
                const double* src = g.data() + bt * plane;
                double* dst = gx.data() + bt * plane;
                for (int j = 0; j < n; ++j) {
                    for (int i = 0; i < m; ++i) {
                        dst[static_cast<std::size_t>(i) * n + j] += src[static_cast<std::size_t>(j) * m + i];
                    }
                }
            }
        });
    }
    return result;
}

Tensor rnn_forward(const Tensor& seq, const RnnParams& params) {
    ensure_defined(seq, "rnn_forward");
    if (seq.rank() != 2) throw ShapeMismatch("rnn_forward: sequence must be T x C");
    const int t_len = seq.shape()[0];
    const int c = seq.shape()[1];
    if (t_len < 1) throw ShapeMismatch("rnn_forward: sequence must have at least one step");
    if (params.w_in.rank() != 2 || params.w_in.shape()[0] != c) {
        throw ShapeMismatch("rnn_forward: w_in must be C x C_h");
    }
    const int ch = params.w_in.shape()[1];
    if (params.w_hidden.rank() != 2 || params.w_hidden.shape()[0] != ch ||
        params.w_hidden.shape()[1] != ch) {
        throw ShapeMismatch("rnn_forward: w_hidden must be C_h x C_h");
    }
    if (params.bias.rank() != 2 || params.bias.shape()[0] != 1 || params.bias.shape()[1] != ch) {
        throw ShapeMismatch("rnn_forward: bias must be 1 x C_h");
    }
    Tensor hidden = Tensor::zeros({1, ch});
    std::vector<Tensor> states;
    states.reserve(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
        Tensor x_t = narrow(seq, 0, t, 1);
        Tensor pre = add(add(matmul(x_t, params.w_in), matmul(hidden, params.w_hidden)), params.bias);
        hidden = tanh_map(pre);
        states.push_back(hidden);
    }
    if (states.size() == 1) return states.front();
    return concat(states, 0);
}

}  // namespace dgsct
