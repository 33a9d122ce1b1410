#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "stshn/tensor.hpp"

namespace stshn {

// Reverse-mode differentiation over dense tensors.
//
// A Tape owns a flat list of nodes; nodes are appended in topological order
// (an op's parents always precede it), so backward() is a single reverse
// sweep. Gradients are allocated lazily: a node whose grad was never touched
// costs nothing, which keeps inference-only forwards cheap.
//
// Tapes and their nodes are confined to one thread. Tensors handed to leaf()
// are copied; the caller's buffers are never aliased.

enum class Op : std::uint8_t {
    leaf,
    matmul,
    add,
    add_n,
    sub,
    mul,
    scale,
    add_scalar,
    relu,
    sigmoid,
    log,
    abs,
    rsqrt,
    clamp,
    softmax,     // per contiguous group of `iaux` entries
    concat,      // along the last dimension
    sum_axis,    // removes axis `iaux`
    sum_all,
    transpose,   // rank-2
    scale_rows,  // rank-2 times per-row vector
    scale_cols,  // rank-2 times per-column vector
    reshape,
};

struct Var {
    std::int32_t i = -1;
    bool valid() const { return i >= 0; }
};

class Tape {
public:
    Var leaf(Tensor value);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var add_n(const std::vector<Var>& xs);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var x, double factor);
    Var add_scalar(Var x, double c);
    Var relu(Var x);
    Var sigmoid(Var x);
    Var log(Var x);
    Var abs(Var x);
    Var rsqrt(Var x);
    Var clamp(Var x, double lo, double hi);
    Var clamp_min(Var x, double lo);
    Var softmax_lastdim(Var x);
    // Softmax over contiguous groups of `group` entries of the flat data.
    // Equivalent to softmax_lastdim on a view whose last extent is `group`.
    Var softmax_groups(Var x, std::size_t group);
    Var concat_lastdim(const std::vector<Var>& xs);
    Var sum_over_axis(Var x, std::size_t axis);
    Var sum_all(Var x);
    Var transpose(Var x);
    Var scale_rows(Var x, Var s);
    Var scale_cols(Var x, Var s);
    Var reshape(Var x, std::vector<std::size_t> new_shape);

    // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse, accumulating
    // every reachable node's gradient. Root must be scalar valued.
    void backward(Var root);

    // Reference remains valid for the tape's lifetime (nodes are never
    // removed until clear()).
    const Tensor& value(Var v) const { return nodes_[v.i].value; }
    // Zero tensor of the node's shape if the node was never reached.
    Tensor grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until first accumulation
        std::vector<std::int32_t> parents;
        Op op = Op::leaf;
        std::int32_t iaux = -1;
        double daux0 = 0.0;
        double daux1 = 0.0;
    };

    Var push(Node n);
    Tensor& grad_ref(std::int32_t i);
    void backward_step(std::int32_t i);

    std::deque<Node> nodes_;
};

}  // namespace stshn
