#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "csm/patterns.hpp"
#include "csm/tensor.hpp"

namespace csm {

/// Reverse-mode differentiation tape over vector-valued nodes.
///
/// A forward pass records one node per operation; backward() replays the
/// recorded closures in reverse. Parameter leaves reference external tensors
/// and accumulate their gradients into external buffers, so one gradient
/// buffer can collect contributions from many tapes (e.g. the sessions of a
/// minibatch) without copies. Intermediate values are owned by the tape.
///
/// The tape only covers the operations the model needs; it is not a general
/// autodiff system.
class Tape {
public:
    using Var = std::uint32_t;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf referencing an external parameter. Gradients accumulate into
    /// *grad, which must stay alive and keep the value's shape.
    Var param(const Tensor* value, Tensor* grad);

    /// Leaf owning a constant; gradients flowing into it are discarded.
    Var constant(Tensor value);
    Var zeros(std::size_t n) { return constant(Tensor::zeros(n)); }

    const Tensor& value(Var v) const { return nodes_[v].val(); }

    Var matvec(Var w, Var x);                            // W x
    Var sparse_embed(Var w, const SparseFeature& f);     // sum_k count_k * row(W, i_k)
    Var embed_row(Var w, std::size_t row);               // row of W
    Var add(Var a, Var b);
    Var add3(Var a, Var b, Var c);
    Var mul(Var a, Var b);                               // elementwise
    Var sigmoid(Var x);
    Var tanh(Var x);
    Var lerp(Var a, Var b, Var t);                       // a + t * (b - a), elementwise
    Var concat(Var a, Var b);
    Var stack(std::span<const Var> scalars);             // vector from scalar nodes
    Var softmax(Var x);
    Var weighted_sum(Var weights, std::span<const Var> items);
    Var dot(Var a, Var b);                               // scalar
    Var sum(std::span<const Var> scalars);               // scalar

    /// Fused softmax + negative log-likelihood of `target`. The node's value
    /// is the scalar loss; the probabilities stay cached (see probs()).
    Var cross_entropy(Var logits, std::size_t target);
    const Tensor& probs(Var xent_node) const { return nodes_[xent_node].aux; }

    /// Seeds d(root)/d(root) = seed and propagates to every leaf. root must be
    /// a scalar node.
    void backward(Var root, double seed = 1.0);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor own_value;
        const Tensor* ext_value = nullptr;
        Tensor grad;
        Tensor* grad_sink = nullptr;
        Tensor aux;  // op-specific cache (softmax probabilities)
        std::function<void(Tape&)> back;

        const Tensor& val() const { return ext_value ? *ext_value : own_value; }
    };

    Var push(Tensor value);
    std::span<const double> val_span(Var v) const { return nodes_[v].val().span(); }
    std::span<double> grad_span(Var v) {
        Node& n = nodes_[v];
        return n.grad_sink ? n.grad_sink->span() : n.grad.span();
    }

    std::vector<Node> nodes_;
};

}  // namespace csm
