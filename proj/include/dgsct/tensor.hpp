#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "dgsct/errors.hpp"
#include "dgsct/rng.hpp"

namespace dgsct {

class Tape;
class GradientMap;

/// Dense n-dimensional array of doubles with value semantics. The payload is
/// immutable and shared between copies; every operation allocates a fresh
/// output. A tensor optionally remembers the tape node that produced it, which
/// is how reverse-mode differentiation finds its way back.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor identity(int n);
    /// Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization.
    static Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng, bool requires_grad = true);
    /// Seeded uniform(-bound, +bound) initialization.
    static Tensor uniform_range(std::vector<int> shape, double bound, Rng& rng,
                                bool requires_grad = true);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t numel() const;
    bool defined() const { return data_ != nullptr; }
    bool requires_grad() const { return requires_grad_; }
    bool is_scalar() const { return numel() == 1; }

    const std::vector<double>& data() const { return *data_; }
    double operator[](std::size_t flat) const { return (*data_)[flat]; }
    double at(std::initializer_list<int> index) const;
    /// Value of a one-element tensor.
    double value() const;

    /// Shared immutable payload; identity of this pointer is the tensor's
    /// identity for gradient lookups.
    std::shared_ptr<const std::vector<double>> payload() const { return data_; }

    /// Same data, requires_grad cleared. Frozen tensors never receive gradients.
    Tensor frozen() const;
    /// Same data, requires_grad set.
    Tensor trainable() const;

private:
    std::vector<int> shape_{};
    std::shared_ptr<const std::vector<double>> data_{};
    bool requires_grad_ = false;
    std::uint64_t tape_id_ = 0;  // id of the tape that recorded this tensor
    int node_ = -1;              // node handle on that tape

    friend class Tape;
};

/// Gradients produced by one backward pass, keyed by leaf tensor identity.
class GradientMap {
public:
    bool contains(const Tensor& leaf) const;
    const Tensor& at(const Tensor& leaf) const;
    std::size_t size() const { return grads_.size(); }

private:
    std::unordered_map<const void*, Tensor> grads_;
    friend class Tape;
};

/// Wengert list for one forward/backward pass. Constructing a Tape makes it
/// the current tape for this thread; operations executed while it is current
/// append nodes whenever an input is grad-active. Append order is the
/// topological order, so backward is a single reverse sweep. A tape is
/// single-use: run backward once, then discard.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current() noexcept;

    /// Reverse accumulation from a one-element root. Returns gradients for
    /// every requires_grad leaf seen by this tape; leaves the root does not
    /// reach get explicit zero gradients.
    GradientMap backward(const Tensor& root);

    std::size_t node_count() const { return nodes_.size(); }

    // --- recording interface used by the operation layer ---

    using PullFn = std::function<void(std::span<const double> out_grad, Tape& tape)>;

    /// Handle for `t` as an input: its own node if this tape recorded it, a
    /// (deduplicated) fresh leaf node if it is a requires_grad tensor from
    /// outside, and -1 for constants.
    int input_handle(const Tensor& t);
    /// True if `t` would participate in differentiation on this tape.
    bool grad_active(const Tensor& t) const;
    /// Append a node for `out` and bind the tensor to it.
    void record(Tensor& out, std::vector<int> parents, PullFn pull);
    /// Accumulation buffer for a node; one zero-filled slab backs them all.
    std::span<double> grad_buffer(int handle);

private:
    struct Node {
        std::vector<int> parents;
        std::size_t size = 0;
        PullFn pull;  // empty for leaves
        // leaf bookkeeping
        std::shared_ptr<const std::vector<double>> leaf_payload;
        std::vector<int> leaf_shape;
    };

    std::vector<Node> nodes_;
    std::vector<double> grad_slab_;
    std::vector<std::size_t> grad_offsets_;
    std::vector<char> reached_;
    std::unordered_map<const void*, int> leaf_index_;
    std::uint64_t id_ = 0;
    bool consumed_ = false;
    Tape* previous_ = nullptr;  // restored as current on destruction
};

/// Reverse accumulation through `tape` from a scalar root.
GradientMap backward(const Tensor& root, Tape& tape);

}  // namespace dgsct
