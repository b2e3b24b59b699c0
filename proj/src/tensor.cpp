#include "dgsct/tensor.hpp"

#include <cmath>
#include <numeric>

namespace dgsct {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return n;
}

void validate_shape(const std::vector<int>& shape) {
    for (int e : shape) {
        if (e <= 0) throw ShapeMismatch("tensor extents must be positive");
    }
}

std::uint64_t next_tape_id() {
    static std::uint64_t counter = 0;
    return ++counter;  // tapes are created on one thread at a time; see concurrency notes
}

thread_local Tape* t_current_tape = nullptr;

}  // namespace

Tensor::Tensor(std::vector<int> shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), requires_grad_(requires_grad) {
    validate_shape(shape_);
    if (shape_numel(shape_) != values.size()) {
        throw ShapeMismatch("data length does not match shape product");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw NonFiniteInput("tensor constructed with non-finite value");
    }
    data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::identity(int n) {
    std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
    return Tensor({n, n}, std::move(v));
}

Tensor Tensor::uniform_init(std::vector<int> shape, int fan_in, Rng& rng, bool requires_grad) {
    return uniform_range(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng,
                         requires_grad);
}

Tensor Tensor::uniform_range(std::vector<int> shape, double bound, Rng& rng, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

std::size_t Tensor::numel() const { return data_ ? data_->size() : 0; }

double Tensor::at(std::initializer_list<int> index) const {
    if (static_cast<int>(index.size()) != rank()) {
        throw ShapeMismatch("index rank does not match tensor rank");
    }
    std::size_t flat = 0;
    int axis = 0;
    for (int i : index) {
        if (i < 0 || i >= shape_[axis]) throw ShapeMismatch("index out of bounds");
        flat = flat * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(i);
        ++axis;
    }
    return (*data_)[flat];
}

double Tensor::value() const {
    if (numel() != 1) throw ShapeMismatch("value() requires a one-element tensor");
    return (*data_)[0];
}

Tensor Tensor::frozen() const {
    Tensor t = *this;
    t.requires_grad_ = false;
    t.tape_id_ = 0;
    t.node_ = -1;
    return t;
}

Tensor Tensor::trainable() const {
    Tensor t = *this;
    t.requires_grad_ = true;
    return t;
}

bool GradientMap::contains(const Tensor& leaf) const {
    return grads_.count(leaf.payload().get()) > 0;
}

const Tensor& GradientMap::at(const Tensor& leaf) const {
    auto it = grads_.find(leaf.payload().get());
    if (it == grads_.end()) {
        throw Error("no gradient recorded for this tensor (frozen or never seen by the tape)");
    }
    return it->second;
}

Tape::Tape() : id_(next_tape_id()), previous_(t_current_tape) { t_current_tape = this; }

Tape::~Tape() { t_current_tape = previous_; }

Tape* Tape::current() noexcept { return t_current_tape; }

int Tape::input_handle(const Tensor& t) {
    if (t.tape_id_ == id_ && t.node_ >= 0) return t.node_;
    if (!t.requires_grad()) return -1;
    const void* key = t.payload().get();
    auto it = leaf_index_.find(key);
    if (it != leaf_index_.end()) return it->second;
    Node node;
    node.size = t.numel();
    node.leaf_payload = t.payload();
    node.leaf_shape = t.shape();
    nodes_.push_back(std::move(node));
    int handle = static_cast<int>(nodes_.size()) - 1;
    leaf_index_.emplace(key, handle);
    return handle;
}

bool Tape::grad_active(const Tensor& t) const {
    return (t.tape_id_ == id_ && t.node_ >= 0) || t.requires_grad();
}

void Tape::record(Tensor& out, std::vector<int> parents, PullFn pull) {
    Node node;
    node.size = out.numel();
    node.parents = std::move(parents);
    node.pull = std::move(pull);
    nodes_.push_back(std::move(node));
    out.tape_id_ = id_;
    out.node_ = static_cast<int>(nodes_.size()) - 1;
    out.requires_grad_ = true;
}

std::span<double> Tape::grad_buffer(int handle) {
    const auto h = static_cast<std::size_t>(handle);
    reached_[h] = 1;
    return {grad_slab_.data() + grad_offsets_[h], nodes_[h].size};
}

GradientMap Tape::backward(const Tensor& root) {
    if (consumed_) throw Error("tape already consumed by a previous backward pass");
    consumed_ = true;
    if (root.numel() != 1) throw NonScalarRoot("backward requires a one-element root");

    grad_offsets_.resize(nodes_.size() + 1, 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        grad_offsets_[i + 1] = grad_offsets_[i] + nodes_[i].size;
    }
    grad_slab_.assign(grad_offsets_.back(), 0.0);
    reached_.assign(nodes_.size(), 0);

    if (root.tape_id_ == id_ && root.node_ >= 0) {
        grad_buffer(root.node_)[0] = 1.0;
        for (int i = root.node_; i >= 0; --i) {
            const auto h = static_cast<std::size_t>(i);
            if (!reached_[h]) continue;  // not reached from the root
            const auto& node = nodes_[h];
            if (node.pull) {
                node.pull(std::span<const double>(grad_slab_.data() + grad_offsets_[h], node.size),
                          *this);
            }
        }
    }
    // Every leaf gets an entry; disconnected leaves report zeros.
    GradientMap out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& node = nodes_[i];
        if (!node.leaf_payload) continue;
        std::vector<double> g(node.size, 0.0);
        if (reached_[i]) {
            const double* base = grad_slab_.data() + grad_offsets_[i];
            g.assign(base, base + node.size);
        }
        out.grads_.emplace(node.leaf_payload.get(), Tensor(node.leaf_shape, std::move(g)));
    }
    return out;
}

GradientMap backward(const Tensor& root, Tape& tape) { return tape.backward(root); }

}  // namespace dgsct
